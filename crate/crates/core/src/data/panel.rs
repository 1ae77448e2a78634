use serde::{Deserialize, Serialize};

use super::kaya::kaya_decompose_partial;
use super::records::RawRecord;
use super::variable::{VariableId, NUM_VARS, SHARE_START};
use crate::error::{Error, Result};

/// Share rows off the simplex by at most this much are rescaled onto it.
pub const SHARE_RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Units of the values held by a [`Panel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Physical,
    Normalized,
}

/// Yearly matrix of the seven model variables for one country.
///
/// Unobserved cells hold NaN and have a `false` mask entry. Observed cells
/// may also be masked out (excluded from losses) while still holding a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    country: String,
    years: Vec<i32>,
    values: Vec<[f64; NUM_VARS]>,
    mask: Vec<[bool; NUM_VARS]>,
    units: Units,
}

impl Panel {
    /// Builds a physical-units panel, checking every invariant.
    ///
    /// Fully observed share rows within [`SHARE_RENORMALIZE_TOLERANCE`] of
    /// summing to one are rescaled; larger deviations are an error.
    pub fn new(
        country: impl Into<String>,
        years: Vec<i32>,
        values: Vec<[f64; NUM_VARS]>,
        mask: Vec<[bool; NUM_VARS]>,
    ) -> Result<Self> {
        let mut panel = Panel::with_units(country, years, values, mask, Units::Physical)?;
        for (row, m) in panel.values.iter_mut().zip(&panel.mask) {
            check_shares(row, m)?;
        }
        Ok(panel)
    }

    pub(crate) fn with_units(
        country: impl Into<String>,
        years: Vec<i32>,
        values: Vec<[f64; NUM_VARS]>,
        mask: Vec<[bool; NUM_VARS]>,
        units: Units,
    ) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::argument("panel has no years"));
        }
        if values.len() != years.len() || mask.len() != years.len() {
            return Err(Error::shape(format!(
                "panel with {} years has {} value rows and {} mask rows",
                years.len(),
                values.len(),
                mask.len()
            )));
        }
        if let Some(w) = years.windows(2).find(|w| w[1] != w[0] + 1) {
            return Err(Error::argument(format!(
                "panel years must be consecutive, found {} then {}",
                w[0], w[1]
            )));
        }
        for (year, (row, m)) in years.iter().zip(values.iter().zip(&mask)) {
            for j in 0..NUM_VARS {
                if m[j] && !row[j].is_finite() {
                    return Err(Error::argument(format!(
                        "observed {} in {year} is not finite",
                        VariableId::ALL[j]
                    )));
                }
            }
        }
        Ok(Panel {
            country: country.into(),
            years,
            values,
            mask,
            units,
        })
    }

    /// A fully observed panel starting at `first_year`.
    pub fn from_rows(country: impl Into<String>, first_year: i32, values: Vec<[f64; NUM_VARS]>) -> Result<Self> {
        let years = (0..values.len() as i32).map(|k| first_year + k).collect();
        let mask = vec![[true; NUM_VARS]; values.len()];
        Panel::new(country, years, values, mask)
    }

    /// Builds one country's panel from its raw records. Missing years inside
    /// the covered range become fully unobserved rows.
    pub fn from_records(records: &[RawRecord]) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::argument("no records for panel"))?;
        let country = first.country.clone();
        if let Some(other) = records.iter().find(|r| r.country != country) {
            return Err(Error::argument(format!(
                "records mix countries {country} and {}",
                other.country
            )));
        }
        let lo = records.iter().map(|r| r.year).min().unwrap();
        let hi = records.iter().map(|r| r.year).max().unwrap();
        let len = (hi - lo + 1) as usize;
        let mut values = vec![[f64::NAN; NUM_VARS]; len];
        let mut mask = vec![[false; NUM_VARS]; len];
        let mut seen = vec![false; len];
        for r in records {
            let k = (r.year - lo) as usize;
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::Duplicate {
                    country: country.clone(),
                    year: r.year,
                });
            }
            for (j, v) in kaya_decompose_partial(r).into_iter().enumerate() {
                if let Some(v) = v {
                    values[k][j] = v;
                    mask[k][j] = true;
                }
            }
        }
        Panel::new(country, (lo..=hi).collect(), values, mask)
    }

    pub fn country(&self) -> &str {
        &self.country
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn values(&self) -> &[[f64; NUM_VARS]] {
        &self.values
    }

    pub fn mask(&self) -> &[[bool; NUM_VARS]] {
        &self.mask
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn first_year(&self) -> i32 {
        self.years[0]
    }

    pub fn last_year(&self) -> i32 {
        *self.years.last().unwrap()
    }

    pub fn row_of(&self, year: i32) -> Option<usize> {
        let k = year.checked_sub(self.first_year())?;
        (k >= 0 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn observed_cells(&self) -> usize {
        self.mask.iter().flatten().filter(|m| **m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().flatten().all(|m| *m)
    }

    /// Observed values of one variable, paired with their years.
    pub fn observed(&self, var: VariableId) -> impl Iterator<Item = (i32, f64)> + '_ {
        let j = var.index();
        self.years
            .iter()
            .zip(self.values.iter().zip(&self.mask))
            .filter(move |(_, (_, m))| m[j])
            .map(move |(y, (row, _))| (*y, row[j]))
    }

    /// Rows `range` as a new panel (same units, same country).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Panel> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::argument(format!(
                "row range {range:?} outside panel of length {}",
                self.len()
            )));
        }
        Ok(Panel {
            country: self.country.clone(),
            years: self.years[range.clone()].to_vec(),
            values: self.values[range.clone()].to_vec(),
            mask: self.mask[range].to_vec(),
            units: self.units,
        })
    }

    /// Copy with values and mask replaced (same years, same units, no share
    /// checks). Used for normalization and augmentation.
    pub(crate) fn replace_data(
        &self,
        years: Vec<i32>,
        values: Vec<[f64; NUM_VARS]>,
        mask: Vec<[bool; NUM_VARS]>,
        units: Units,
    ) -> Result<Panel> {
        Panel::with_units(self.country.clone(), years, values, mask, units)
    }

    /// Physical panel rows as CSV `country,year,<7 variables>`.
    pub fn to_indicator_csv(&self) -> String {
        let mut out = String::from("country,year");
        for v in VariableId::ALL {
            out.push(',');
            out.push_str(v.name());
        }
        out.push('\n');
        for (year, (row, m)) in self.years.iter().zip(self.values.iter().zip(&self.mask)) {
            out.push_str(&format!("{},{}", self.country, year));
            for j in 0..NUM_VARS {
                out.push(',');
                if m[j] {
                    out.push_str(&row[j].to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

fn check_shares(row: &mut [f64; NUM_VARS], mask: &[bool; NUM_VARS]) -> Result<()> {
    for j in SHARE_START..NUM_VARS {
        if mask[j] && !(0.0..=1.0).contains(&row[j]) {
            return Err(Error::argument(format!(
                "{} = {} outside [0, 1]",
                VariableId::ALL[j],
                row[j]
            )));
        }
    }
    if mask[SHARE_START..].iter().all(|m| *m) {
        let sum: f64 = row[SHARE_START..].iter().sum();
        let deviation = (sum - 1.0).abs();
        if deviation > SHARE_RENORMALIZE_TOLERANCE {
            return Err(Error::argument(format!(
                "electricity shares sum to {sum}, off by more than {SHARE_RENORMALIZE_TOLERANCE}"
            )));
        }
        if deviation > 0.0 {
            for s in &mut row[SHARE_START..] {
                *s /= sum;
            }
        }
    }
    Ok(())
}

/// Groups records by country into panels, in country order.
pub fn panels_from_records(records: &[RawRecord]) -> Result<Vec<Panel>> {
    let mut sorted: Vec<&RawRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.country.cmp(&b.country).then(a.year.cmp(&b.year)));
    sorted
        .chunk_by(|a, b| a.country == b.country)
        .map(|group| {
            let owned: Vec<RawRecord> = group.iter().map(|r| (*r).clone()).collect();
            Panel::from_records(&owned)
        })
        .collect()
}

/// Splits off the last `horizon` years as the validation window.
pub fn split_panel(panel: &Panel, horizon: usize) -> Result<(Panel, Panel)> {
    let t = panel.len();
    if horizon < 1 || horizon + 2 > t {
        return Err(Error::argument(format!(
            "horizon {horizon} outside [1, {}] for a panel of {t} years",
            t.saturating_sub(2)
        )));
    }
    let cut = t - horizon;
    Ok((panel.slice(0..cut)?, panel.slice(cut..t)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_rows(n: usize) -> Vec<[f64; NUM_VARS]> {
        (0..n)
            .map(|k| [1e6 + k as f64, 2.0, 3.0, 4.0, 0.5, 0.25, 0.25])
            .collect()
    }

    fn france() -> Panel {
        Panel::from_rows("FRA", 1971, flat_rows(49)).unwrap()
    }

    #[test]
    fn france_twelve_year_split() {
        let p = france();
        assert_eq!(p.last_year(), 2019);
        let (train, val) = split_panel(&p, 12).unwrap();
        assert_eq!((train.first_year(), train.last_year()), (1971, 2007));
        assert_eq!((val.first_year(), val.last_year()), (2008, 2019));
    }

    #[test]
    fn split_bounds() {
        let p = france();
        let (train, val) = split_panel(&p, 47).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(val.len(), 47);
        assert!(split_panel(&p, 0).is_err());
        assert!(split_panel(&p, 48).is_err());
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let p = france();
        for h in 1..=47 {
            let (train, val) = split_panel(&p, h).unwrap();
            let mut all: Vec<i32> = train.years().to_vec();
            assert!(val.years().iter().all(|y| !all.contains(y)));
            all.extend_from_slice(val.years());
            assert_eq!(all, p.years());
        }
    }

    #[test]
    fn share_rows_renormalized_within_tolerance() {
        let mut rows = flat_rows(2);
        rows[0][4] = 0.5 + 5e-7;
        let p = Panel::from_rows("XAA", 2000, rows.clone()).unwrap();
        let s: f64 = p.values()[0][4..].iter().sum();
        assert!((s - 1.0).abs() < 1e-15);

        rows[0][4] = 0.5 + 1e-4;
        assert!(Panel::from_rows("XAA", 2000, rows).is_err());
    }

    #[test]
    fn rejects_gaps_nan_and_out_of_range_shares() {
        let rows = flat_rows(2);
        let mask = vec![[true; NUM_VARS]; 2];
        assert!(Panel::new("XAA", vec![2000, 2002], rows.clone(), mask.clone()).is_err());

        let mut bad = rows.clone();
        bad[1][0] = f64::NAN;
        assert!(Panel::new("XAA", vec![2000, 2001], bad.clone(), mask.clone()).is_err());
        let mut m = mask.clone();
        m[1][0] = false;
        assert!(Panel::new("XAA", vec![2000, 2001], bad, m).is_ok());

        let mut neg = rows;
        neg[0][4] = 1.25;
        neg[0][5] = -0.25;
        neg[0][6] = 0.0;
        assert!(Panel::new("XAA", vec![2000, 2001], neg, mask).is_err());
    }

    #[test]
    fn records_with_gap_become_unobserved_row() {
        let a = RawRecord::complete("XAA", 2000, 2.0, 6.0, 3.0, 12.0, [2.0, 1.0, 1.0]);
        let mut b = a.clone();
        b.year = 2002;
        let p = Panel::from_records(&[a, b]).unwrap();
        assert_eq!(p.years(), &[2000, 2001, 2002]);
        assert_eq!(p.mask()[1], [false; NUM_VARS]);
        assert_eq!(p.values()[2], [2.0, 3.0, 0.5, 4.0, 0.5, 0.25, 0.25]);
        assert_eq!(p.observed_cells(), 14);
    }

    #[test]
    fn groups_by_country() {
        let a = RawRecord::complete("FRA", 2000, 2.0, 6.0, 3.0, 12.0, [2.0, 1.0, 1.0]);
        let mut b = a.clone();
        b.country = "DEU".into();
        let panels = panels_from_records(&[a, b]).unwrap();
        let names: Vec<_> = panels.iter().map(|p| p.country()).collect();
        assert_eq!(names, vec!["DEU", "FRA"]);
    }
}
