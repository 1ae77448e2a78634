//! Canonical raw panel CSV: one row per (country, year) with the measured
//! quantities from which the Kaya indicators are derived.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "country",
    "year",
    "P",
    "G",
    "E",
    "F",
    "gen_fossil",
    "gen_nuclear",
    "gen_renewable",
];

/// One row of the canonical raw CSV. `None` marks a missing observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub country: String,
    pub year: i32,
    /// Population (persons).
    pub population: Option<f64>,
    /// GDP in constant-currency units.
    pub gdp: Option<f64>,
    /// Total energy supply.
    pub energy: Option<f64>,
    /// CO2 emissions from fuel combustion.
    pub emissions: Option<f64>,
    pub gen_fossil: Option<f64>,
    pub gen_nuclear: Option<f64>,
    pub gen_renewable: Option<f64>,
}

impl RawRecord {
    /// A record with every field observed.
    #[allow(clippy::too_many_arguments)]
    pub fn complete(
        country: &str,
        year: i32,
        population: f64,
        gdp: f64,
        energy: f64,
        emissions: f64,
        generation: [f64; 3],
    ) -> Self {
        RawRecord {
            country: country.to_string(),
            year,
            population: Some(population),
            gdp: Some(gdp),
            energy: Some(energy),
            emissions: Some(emissions),
            gen_fossil: Some(generation[0]),
            gen_nuclear: Some(generation[1]),
            gen_renewable: Some(generation[2]),
        }
    }

    pub fn generation(&self) -> [Option<f64>; 3] {
        [self.gen_fossil, self.gen_nuclear, self.gen_renewable]
    }

    /// Checks the sign constraints on every observed field.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = [("P", self.population), ("G", self.gdp), ("E", self.energy)];
        for (name, value) in positive {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(f) = self.emissions {
            if !(f.is_finite() && f >= 0.0) {
                return Err(format!("F must be non-negative, got {f}"));
            }
        }
        let generation = self.generation();
        for v in generation.iter().flatten() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(format!("generation must be non-negative, got {v}"));
            }
        }
        if generation.iter().all(Option::is_some) && generation.iter().flatten().all(|v| *v == 0.0) {
            return Err("at least one generation value must be positive".into());
        }
        Ok(())
    }
}

fn parse_field(raw: &str, name: &str, line: usize) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|_| Error::Parse {
        line,
        message: format!("field {name}: `{raw}` is not a number"),
    })
}

/// Parses the canonical wide-format panel CSV.
///
/// Records come back sorted by country, then year. Line numbers in errors
/// count the header as line 1.
pub fn parse_panel_csv(text: &str) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if row.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", CSV_HEADER.len(), row.len()),
            });
        }
        if i == 0 {
            if row.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Parse {
                    line,
                    message: format!("header must be `{}`", CSV_HEADER.join(",")),
                });
            }
            continue;
        }

        let country = row[0].to_string();
        if country.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty country code".into(),
            });
        }
        let year = row[1].parse::<i32>().map_err(|_| Error::Parse {
            line,
            message: format!("year `{}` is not an integer", &row[1]),
        })?;
        let mut values = [None; 7];
        for (k, slot) in values.iter_mut().enumerate() {
            *slot = parse_field(&row[k + 2], CSV_HEADER[k + 2], line)?;
        }
        let record = RawRecord {
            country,
            year,
            population: values[0],
            gdp: values[1],
            energy: values[2],
            emissions: values[3],
            gen_fossil: values[4],
            gen_nuclear: values[5],
            gen_renewable: values[6],
        };
        record.validate().map_err(|message| Error::Parse { line, message })?;
        if !seen.insert((record.country.clone(), year)) {
            return Err(Error::Duplicate {
                country: record.country,
                year,
            });
        }
        records.push(record);
    }
    records.sort_by(|a, b| a.country.cmp(&b.country).then(a.year.cmp(&b.year)));
    Ok(records)
}

fn format_field(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes records in the canonical CSV layout; missing values become empty fields.
pub fn write_panel_csv(records: &[RawRecord]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        let fields = [
            r.population,
            r.gdp,
            r.energy,
            r.emissions,
            r.gen_fossil,
            r.gen_nuclear,
            r.gen_renewable,
        ];
        out.push_str(&r.country);
        out.push(',');
        out.push_str(&r.year.to_string());
        for f in fields {
            out.push(',');
            out.push_str(&format_field(f));
        }
        out.push('\n');
    }
    out
}
