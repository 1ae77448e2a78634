//! Trained model bundles and physical-unit forecasts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{kaya_recompose, normalize_panel, Normalizer, Panel, VariableId, NUM_VARS, SHARE_START};
use crate::error::{Error, Result};
use crate::ode::{integrate, MlpParams, Trajectory};
use crate::train::{train, LossReport, TrainConfig, TrainingSeries};
use crate::var::{var_fit_panel, var_forecast, VarModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Node,
    Var,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Node => "NODE",
            ModelKind::Var => "VAR",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "node" => Ok(ModelKind::Node),
            "var" => Ok(ModelKind::Var),
            other => Err(Error::argument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A trained neural ODE with everything needed to forecast one country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub country: String,
    /// One-hot input when trained jointly with other countries.
    pub encoding: Option<Vec<f64>>,
    pub train_start: i32,
    pub train_end: i32,
    pub substeps_per_year: usize,
    pub normalizer: Normalizer,
    /// Normalized state at `train_start`.
    pub initial_state: [f64; NUM_VARS],
    pub params: MlpParams,
}

impl NodeModel {
    /// Normalized trajectory on the yearly grid `train_start..=last_year`.
    pub fn trajectory(&self, last_year: i32) -> Result<Trajectory> {
        self.trajectory_with(&self.params, last_year)
    }

    pub(crate) fn trajectory_with(&self, params: &MlpParams, last_year: i32) -> Result<Trajectory> {
        if last_year < self.train_start {
            return Err(Error::argument(format!(
                "cannot forecast to {last_year}, before the first training year {}",
                self.train_start
            )));
        }
        let years: Vec<i32> = (self.train_start..=last_year).collect();
        integrate(
            params,
            &self.initial_state,
            &self.normalizer.model_times(&years),
            self.substeps_per_year,
            self.encoding.as_deref(),
        )
    }

    /// Normalized forecast rows for the `horizon` years after `train_end`.
    pub fn forecast(&self, horizon: usize) -> Result<Vec<[f64; NUM_VARS]>> {
        let traj = self.trajectory(self.train_end + horizon as i32)?;
        let skip = (self.train_end - self.train_start + 1) as usize;
        Ok(traj.states[skip..].to_vec())
    }

    pub fn params_hash(&self) -> String {
        digest(&self.params)
    }
}

/// A fitted VAR with its normalizer and the lag rows it forecasts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarBundle {
    pub country: String,
    pub train_end: i32,
    pub normalizer: Normalizer,
    /// Last `order` normalized training rows, oldest first.
    pub history: Vec<[f64; NUM_VARS]>,
    pub model: VarModel,
}

impl VarBundle {
    pub fn forecast(&self, horizon: usize) -> Result<Vec<[f64; NUM_VARS]>> {
        var_forecast(&self.model, &self.history, horizon)
    }
}

/// A normalized panel window ready for fitting, with its normalizer.
#[derive(Debug, Clone)]
pub struct PreparedPanel {
    pub normalizer: Normalizer,
    pub train: Panel,
    /// Rows after `train_end`, normalized with the training statistics.
    pub validation: Option<Panel>,
}

/// Normalizes `panel` on the years up to `train_end` and splits it there.
pub fn prepare(panel: &Panel, train_end: i32) -> Result<PreparedPanel> {
    let (norm, normalizer) = normalize_panel(panel, train_end)?;
    let cut = norm.row_of(train_end).expect("train_end checked by normalize_panel") + 1;
    let train = norm.slice(0..cut)?;
    let validation = if cut < norm.len() {
        Some(norm.slice(cut..norm.len())?)
    } else {
        None
    };
    Ok(PreparedPanel {
        normalizer,
        train,
        validation,
    })
}

/// Fits a single-country neural ODE on the prepared training window.
pub fn fit_node(prepared: &PreparedPanel, cfg: &TrainConfig) -> Result<(NodeModel, LossReport)> {
    let series = TrainingSeries::from_panel(&prepared.train, &prepared.normalizer, None)?;
    let report = train(std::slice::from_ref(&series), cfg)?;
    let model = NodeModel {
        country: prepared.train.country().to_string(),
        encoding: None,
        train_start: prepared.train.first_year(),
        train_end: prepared.train.last_year(),
        substeps_per_year: cfg.substeps_per_year,
        normalizer: prepared.normalizer.clone(),
        initial_state: series.initial_state(),
        params: report.params.clone(),
    };
    Ok((model, report))
}

/// Jointly fits one network on several countries, each tagged with a
/// one-hot encoding when `one_hot` is set.
pub fn fit_node_multi(
    prepared: &[PreparedPanel],
    cfg: &TrainConfig,
    one_hot: bool,
) -> Result<(Vec<NodeModel>, LossReport)> {
    let count = prepared.len();
    let series: Vec<TrainingSeries> = prepared
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let enc = one_hot.then(|| crate::ode::one_hot(i, count));
            TrainingSeries::from_panel(&p.train, &p.normalizer, enc)
        })
        .collect::<Result<_>>()?;
    let report = train(&series, cfg)?;
    let models = prepared
        .iter()
        .zip(&series)
        .map(|(p, s)| NodeModel {
            country: p.train.country().to_string(),
            encoding: s.encoding.clone(),
            train_start: p.train.first_year(),
            train_end: p.train.last_year(),
            substeps_per_year: cfg.substeps_per_year,
            normalizer: p.normalizer.clone(),
            initial_state: s.initial_state(),
            params: report.params.clone(),
        })
        .collect();
    Ok((models, report))
}

pub fn fit_var(prepared: &PreparedPanel, order: usize) -> Result<VarBundle> {
    let model = var_fit_panel(&prepared.train, order)?;
    let rows = prepared.train.values();
    Ok(VarBundle {
        country: prepared.train.country().to_string(),
        train_end: prepared.train.last_year(),
        normalizer: prepared.normalizer.clone(),
        history: rows[rows.len() - order..].to_vec(),
        model,
    })
}

/// Short SHA-256 of a value's JSON encoding.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    let hash = Sha256::digest(&bytes);
    hex::encode(&hash[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetadata {
    pub normalizer_hash: String,
    pub params_hash: String,
    /// Variables whose reported values were clamped into [0, 1].
    pub clamped: Vec<VariableId>,
    /// Set when the physical shares of some year miss summing to one by more than 1e-6.
    pub share_sum_warning: bool,
    pub version: Option<u64>,
}

/// Yearly trajectories in physical units with recomposed emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub country: String,
    pub model: ModelKind,
    pub years: Vec<i32>,
    pub variables: BTreeMap<VariableId, Vec<f64>>,
    pub emissions: Vec<f64>,
    pub metadata: ForecastMetadata,
}

impl ForecastResult {
    /// Denormalizes `rows`, clamps shares into [0, 1] for presentation and
    /// recomposes emissions.
    pub fn from_normalized(
        country: &str,
        model: ModelKind,
        years: Vec<i32>,
        rows: &[[f64; NUM_VARS]],
        normalizer: &Normalizer,
        params_hash: String,
    ) -> Result<Self> {
        if years.len() != rows.len() {
            return Err(Error::shape("forecast years and rows differ in length"));
        }
        let mut clamped = Vec::new();
        let mut share_sum_warning = false;
        let mut physical: Vec<[f64; NUM_VARS]> = rows.iter().map(|r| normalizer.denormalize_row(r)).collect();
        for row in &mut physical {
            let sum: f64 = row[SHARE_START..].iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                share_sum_warning = true;
            }
            for (j, v) in row.iter_mut().enumerate().skip(SHARE_START) {
                if !(0.0..=1.0).contains(v) {
                    *v = v.clamp(0.0, 1.0);
                    let var = VariableId::ALL[j];
                    if !clamped.contains(&var) {
                        clamped.push(var);
                    }
                }
            }
        }
        clamped.sort();
        let variables = VariableId::ALL
            .iter()
            .map(|v| (*v, physical.iter().map(|r| r[v.index()]).collect()))
            .collect();
        let emissions = physical.iter().map(|r| kaya_recompose(r)).collect();
        Ok(ForecastResult {
            country: country.to_string(),
            model,
            years,
            variables,
            emissions,
            metadata: ForecastMetadata {
                normalizer_hash: digest(normalizer),
                params_hash,
                clamped,
                share_sum_warning,
                version: None,
            },
        })
    }
}

/// Forecast of a NODE model: fitted history from `train_start` plus `horizon` years.
pub fn node_forecast_result(model: &NodeModel, horizon: usize) -> Result<ForecastResult> {
    let last = model.train_end + horizon as i32;
    let traj = model.trajectory(last)?;
    ForecastResult::from_normalized(
        &model.country,
        ModelKind::Node,
        (model.train_start..=last).collect(),
        &traj.states,
        &model.normalizer,
        model.params_hash(),
    )
}

/// Forecast of a VAR model for the `horizon` years after `train_end`.
pub fn var_forecast_result(bundle: &VarBundle, horizon: usize) -> Result<ForecastResult> {
    let rows = bundle.forecast(horizon)?;
    ForecastResult::from_normalized(
        &bundle.country,
        ModelKind::Var,
        (bundle.train_end + 1..=bundle.train_end + horizon as i32).collect(),
        &rows,
        &bundle.normalizer,
        digest(&bundle.model),
    )
}

/// What `train` writes: a NODE model plus, when it could be fitted, the VAR
/// baseline on the same window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub node: NodeModel,
    pub var: Option<VarBundle>,
}

impl ModelBundle {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(node: NodeModel, var: Option<VarBundle>) -> Self {
        ModelBundle {
            format_version: Self::FORMAT_VERSION,
            node,
            var,
        }
    }

    pub fn country(&self) -> &str {
        &self.node.country
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: ModelBundle = serde_json::from_str(text)?;
        if bundle.format_version != Self::FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                bundle.format_version
            )));
        }
        if let Some(var) = &bundle.var {
            if var.country != bundle.node.country {
                return Err(Error::Config(
                    "NODE and VAR models belong to different countries".into(),
                ));
            }
        }
        Ok(bundle)
    }

    pub fn forecast(&self, kind: ModelKind, horizon: usize) -> Result<ForecastResult> {
        match kind {
            ModelKind::Node => node_forecast_result(&self.node, horizon),
            ModelKind::Var => match &self.var {
                Some(var) => var_forecast_result(var, horizon),
                None => Err(Error::argument(format!("no VAR model stored for {}", self.country()))),
            },
        }
    }
}
