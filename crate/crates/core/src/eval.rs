//! Forecast scoring, the multi-country/multi-horizon comparison and
//! boxplot summaries.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_panel, split_panel, Panel, VariableId, NUM_VARS};
use crate::error::{Error, Result};
use crate::model::{fit_node, fit_var, prepare, ModelKind};
use crate::train::TrainConfig;

/// Fifteen European ISO-3 codes used when an experiment names no countries.
/// This cohort is our own choice.
pub const DEFAULT_COUNTRIES: [&str; 15] = [
    "AUT", "BEL", "CHE", "DEU", "DNK", "ESP", "FIN", "FRA", "GBR", "GRC", "IRL", "ITA", "NLD", "PRT", "SWE",
];

pub const DEFAULT_HORIZONS: [usize; 4] = [2, 5, 8, 12];

/// Mean squared errors over the masked cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub total: f64,
    /// `None` for a variable with no masked cells.
    pub per_variable: [Option<f64>; NUM_VARS],
}

pub fn mse(forecast: &[[f64; NUM_VARS]], truth: &[[f64; NUM_VARS]], mask: &[[bool; NUM_VARS]]) -> Result<MseReport> {
    if forecast.len() != truth.len() || truth.len() != mask.len() {
        return Err(Error::argument(format!(
            "shape mismatch: forecast {} rows, truth {} rows, mask {} rows",
            forecast.len(),
            truth.len(),
            mask.len()
        )));
    }
    let mut sums = [0.0; NUM_VARS];
    let mut counts = [0usize; NUM_VARS];
    for ((f, t), m) in forecast.iter().zip(truth).zip(mask) {
        for j in 0..NUM_VARS {
            if m[j] {
                let d = f[j] - t[j];
                sums[j] += d * d;
                counts[j] += 1;
            }
        }
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::argument("mask selects no cells"));
    }
    Ok(MseReport {
        total: sums.iter().sum::<f64>() / n as f64,
        per_variable: std::array::from_fn(|j| (counts[j] > 0).then(|| sums[j] / counts[j] as f64)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

impl BoxplotStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quantile by linear interpolation between order statistics (type 7):
/// position `q·(n−1)` in the sorted sample.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    if values.is_empty() {
        return Err(Error::argument("boxplot of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::argument("boxplot sample contains NaN"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(BoxplotStats {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        n: sorted.len(),
    })
}

/// Which countries, horizons and models to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub countries: Vec<String>,
    pub horizons: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub train: TrainConfig,
    pub seed: u64,
    pub var_order: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            countries: DEFAULT_COUNTRIES.iter().map(|c| c.to_string()).collect(),
            horizons: DEFAULT_HORIZONS.to_vec(),
            models: vec![ModelKind::Node, ModelKind::Var],
            train: TrainConfig::default(),
            seed: 0,
            var_order: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.countries.is_empty() {
            return Err(Error::argument("experiment needs at least one country"));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::argument("horizons must be non-empty and positive"));
        }
        if self.models.is_empty() {
            return Err(Error::argument("experiment needs at least one model kind"));
        }
        if self.var_order == 0 {
            return Err(Error::argument("var_order must be at least 1"));
        }
        self.train.validate()
    }
}

/// Validation score of one (country, horizon, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub country: String,
    pub horizon: usize,
    pub model: ModelKind,
    pub mse: MseReport,
    /// Root mean squared error per variable in physical units.
    pub rmse_physical: [Option<f64>; NUM_VARS],
    pub validation_years: Vec<i32>,
    /// Normalized forecast for the validation years.
    pub forecast: Vec<[f64; NUM_VARS]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn csv_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultTable {
    /// Tidy CSV `country,horizon,model,mse_total,mse_var_1..7`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("country,horizon,model,mse_total");
        for j in 1..=NUM_VARS {
            out.push_str(&format!(",mse_var_{j}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                r.country,
                r.horizon,
                r.model.label(),
                r.mse.total
            ));
            for v in r.mse.per_variable {
                out.push(',');
                out.push_str(&csv_field(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn scores(&self, horizon: usize, model: ModelKind) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.horizon == horizon && r.model == model)
            .map(|r| r.mse.total)
            .collect()
    }

    /// Boxplot of validation MSE across countries, keyed by horizon then model label.
    pub fn boxplots(&self) -> Result<BTreeMap<usize, BTreeMap<String, BoxplotStats>>> {
        let mut out: BTreeMap<usize, BTreeMap<String, BoxplotStats>> = BTreeMap::new();
        let mut keys: Vec<(usize, ModelKind)> = self.rows.iter().map(|r| (r.horizon, r.model)).collect();
        keys.sort();
        keys.dedup();
        for (h, m) in keys {
            let stats = boxplot_stats(&self.scores(h, m))?;
            out.entry(h).or_default().insert(m.label().to_string(), stats);
        }
        Ok(out)
    }
}

/// Data behind the two standard figures: validation MSE per horizon and
/// model across countries, and per-country forecast trajectories in
/// physical units at the longest horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub mse_by_horizon: BTreeMap<usize, BTreeMap<String, Vec<f64>>>,
    pub trajectories: Vec<PlotTrajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotTrajectory {
    pub country: String,
    pub model: String,
    pub horizon: usize,
    pub observed_years: Vec<i32>,
    pub observed: BTreeMap<VariableId, Vec<Option<f64>>>,
    pub forecast_years: Vec<i32>,
    pub forecast: BTreeMap<VariableId, Vec<f64>>,
}

impl ResultTable {
    pub fn plot_data(&self, panels: &[Panel]) -> Result<PlotData> {
        let mut mse_by_horizon: BTreeMap<usize, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        for r in &self.rows {
            mse_by_horizon
                .entry(r.horizon)
                .or_default()
                .entry(r.model.label().to_string())
                .or_default()
                .push(r.mse.total);
        }
        let longest = self.rows.iter().map(|r| r.horizon).max();
        let mut trajectories = Vec::new();
        for r in self.rows.iter().filter(|r| Some(r.horizon) == longest) {
            let panel = panels
                .iter()
                .find(|p| p.country() == r.country)
                .ok_or_else(|| Error::argument(format!("no panel for country {}", r.country)))?;
            let train_end = r.validation_years[0] - 1;
            let (_, normalizer) = normalize_panel(panel, train_end)?;
            let observed = VariableId::ALL
                .iter()
                .map(|v| {
                    let column = panel
                        .values()
                        .iter()
                        .zip(panel.mask())
                        .map(|(row, m)| m[v.index()].then(|| row[v.index()]))
                        .collect();
                    (*v, column)
                })
                .collect();
            let forecast = VariableId::ALL
                .iter()
                .map(|v| {
                    (
                        *v,
                        r.forecast
                            .iter()
                            .map(|row| normalizer.denormalize(*v, row[v.index()]))
                            .collect(),
                    )
                })
                .collect();
            trajectories.push(PlotTrajectory {
                country: r.country.clone(),
                model: r.model.label().to_string(),
                horizon: r.horizon,
                observed_years: panel.years().to_vec(),
                observed,
                forecast_years: r.validation_years.clone(),
                forecast,
            });
        }
        Ok(PlotData {
            mse_by_horizon,
            trajectories,
        })
    }
}

/// Scores every requested model on one country and horizon.
fn run_cell(panel: &Panel, horizon: usize, spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let (train_raw, validation_raw) = split_panel(panel, horizon)?;
    let prepared = prepare(panel, train_raw.last_year())?;
    let validation = prepared.validation.as_ref().expect("horizon >= 1");
    let mut cfg = spec.train.clone();
    cfg.seed = spec.seed;

    let mut rows = Vec::new();
    for kind in &spec.models {
        let forecast = match kind {
            ModelKind::Node => fit_node(&prepared, &cfg)?.0.forecast(horizon)?,
            ModelKind::Var => fit_var(&prepared, spec.var_order)?.forecast(horizon)?,
        };
        let score = mse(&forecast, validation.values(), validation.mask())?;
        let mut rmse_physical = [None; NUM_VARS];
        for (j, slot) in rmse_physical.iter_mut().enumerate() {
            let (mut sum, mut n) = (0.0, 0usize);
            for ((f, t), m) in forecast.iter().zip(validation_raw.values()).zip(validation_raw.mask()) {
                if m[j] {
                    let d = prepared.normalizer.denormalize(VariableId::ALL[j], f[j]) - t[j];
                    sum += d * d;
                    n += 1;
                }
            }
            *slot = (n > 0).then(|| (sum / n as f64).sqrt());
        }
        rows.push(ResultRow {
            country: panel.country().to_string(),
            horizon,
            model: *kind,
            mse: score,
            rmse_physical,
            validation_years: validation.years().to_vec(),
            forecast,
        });
    }
    Ok(rows)
}

/// Splits, normalizes on the training window, fits, forecasts and scores
/// every (country, horizon, model) cell. Cells run in parallel; the table is
/// ordered by country (as listed), horizon (as listed), then model.
pub fn run_experiment(spec: &ExperimentSpec, panels: &[Panel]) -> Result<ResultTable> {
    spec.validate()?;
    let mut cells = Vec::new();
    for country in &spec.countries {
        let panel = panels
            .iter()
            .find(|p| p.country() == country)
            .ok_or_else(|| Error::argument(format!("no panel for country {country}")))?;
        for &h in &spec.horizons {
            if h + 2 > panel.len() {
                return Err(Error::argument(format!(
                    "horizon {h} too long for {country} ({} years)",
                    panel.len()
                )));
            }
            cells.push((panel, h));
        }
    }
    let results: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|(panel, h)| {
            run_cell(panel, *h, spec).map_err(|e| e.in_context(format!("cell ({}, horizon {h})", panel.country())))
        })
        .collect::<Result<_>>()?;
    Ok(ResultTable {
        rows: results.into_iter().flatten().collect(),
    })
}
