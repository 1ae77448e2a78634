//! HTTP JSON API over loaded panels and trained models.
//!
//! Each country's model is a list of immutable, versioned snapshots. Reads
//! clone the `Arc` of the requested (or latest) snapshot and never wait on a
//! fine-tune; a fine-tune job builds its new snapshot privately and publishes
//! it by pushing onto the list. Jobs for one model run one at a time.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{kaya_recompose, panels_from_records, parse_panel_csv, Panel, VariableId};
use crate::error::{Error, Result};
use crate::model::{ForecastResult, ModelBundle, ModelKind};
use crate::scenario::{pinned_forecast_result, run_augmented_scenario, ScenarioMode, ScenarioSpec};
use crate::train::TrainConfig;

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "KAYA_DATA_DIR";
pub const DEFAULT_QUEUE_CAPACITY: usize = 4;
const MAX_HORIZON: usize = 200;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Holds `panels/*.csv` and `models/*.json`.
    pub data_dir: PathBuf,
    pub addr: SocketAddr,
    /// Fine-tune jobs allowed queued or running per model.
    pub queue_capacity: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }

    /// Data directory from `KAYA_DATA_DIR`, falling back to `./data`.
    pub fn from_env() -> Self {
        Self::new(
            std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| "data".into()),
        )
    }
}

struct ModelSlot {
    versions: RwLock<Vec<Arc<ModelBundle>>>,
    writer: tokio::sync::Mutex<()>,
    pending: AtomicUsize,
}

impl ModelSlot {
    fn new(bundle: ModelBundle) -> Self {
        ModelSlot {
            versions: RwLock::new(vec![Arc::new(bundle)]),
            writer: tokio::sync::Mutex::new(()),
            pending: AtomicUsize::new(0),
        }
    }

    /// Snapshot `version` (1-based), or the latest with its version number.
    fn snapshot(&self, version: Option<u64>) -> Option<(u64, Arc<ModelBundle>)> {
        let versions = self.versions.read().expect("lock poisoned");
        match version {
            None => Some((versions.len() as u64, versions.last()?.clone())),
            Some(0) => None,
            Some(v) => versions.get(v as usize - 1).map(|b| (v, b.clone())),
        }
    }

    fn publish(&self, bundle: ModelBundle) -> u64 {
        let mut versions = self.versions.write().expect("lock poisoned");
        versions.push(Arc::new(bundle));
        versions.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Succeeded {
        version: u64,
        before: Option<f64>,
        after: Option<f64>,
        final_loss: Option<f64>,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: u64,
    pub country: String,
    pub base_version: u64,
    #[serde(flatten)]
    pub state: JobState,
}

/// Everything the handlers share.
pub struct AppState {
    panels: BTreeMap<String, Panel>,
    models: BTreeMap<String, ModelSlot>,
    jobs: Mutex<BTreeMap<u64, JobRecord>>,
    next_job: AtomicU64,
    queue_capacity: usize,
}

impl AppState {
    pub fn new(panels: Vec<Panel>, models: Vec<ModelBundle>, queue_capacity: usize) -> Result<Self> {
        let mut panel_map = BTreeMap::new();
        for p in panels {
            if panel_map.insert(p.country().to_string(), p).is_some() {
                return Err(Error::Config("two panels for one country".into()));
            }
        }
        let mut model_map = BTreeMap::new();
        for m in models {
            let country = m.country().to_string();
            if model_map.insert(country.clone(), ModelSlot::new(m)).is_some() {
                return Err(Error::Config(format!("two models for {country}")));
            }
        }
        Ok(AppState {
            panels: panel_map,
            models: model_map,
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            queue_capacity,
        })
    }

    /// Loads every `panels/*.csv` and `models/*.json` under `dir`.
    pub fn load(dir: &Path, queue_capacity: usize) -> Result<Self> {
        let mut panels = Vec::new();
        for path in sorted_files(&dir.join("panels"), "csv")? {
            let text = std::fs::read_to_string(&path)?;
            let records = parse_panel_csv(&text).map_err(|e| e.in_context(path.display().to_string()))?;
            panels.extend(panels_from_records(&records)?);
        }
        let mut models = Vec::new();
        for path in sorted_files(&dir.join("models"), "json")? {
            let text = std::fs::read_to_string(&path)?;
            models.push(ModelBundle::from_json(&text).map_err(|e| e.in_context(path.display().to_string()))?);
        }
        log::info!(
            "loaded {} panels and {} models from {}",
            panels.len(),
            models.len(),
            dir.display()
        );
        Self::new(panels, models, queue_capacity)
    }

    fn slot(&self, country: &str) -> Result<&ModelSlot, ApiError> {
        self.models
            .get(country)
            .ok_or_else(|| ApiError::not_found(format!("no model for country {country}")))
    }

    fn snapshot(&self, country: &str, version: Option<u64>) -> Result<(u64, Arc<ModelBundle>), ApiError> {
        self.slot(country)?
            .snapshot(version)
            .ok_or_else(|| ApiError::not_found(format!("model {country} has no version {}", version.unwrap_or(0))))
    }

    fn panel(&self, country: &str) -> Result<&Panel, ApiError> {
        self.panels
            .get(country)
            .ok_or_else(|| ApiError::not_found(format!("no panel for country {country}")))
    }

    fn set_job(&self, id: u64, state: JobState) {
        if let Some(job) = self.jobs.lock().expect("lock poisoned").get_mut(&id) {
            job.state = state;
        }
    }

    pub fn job(&self, id: u64) -> Option<JobRecord> {
        self.jobs.lock().expect("lock poisoned").get(&id).cloned()
    }
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

/// Error body: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match root(&e) {
            Error::Argument(_) | Error::Shape(_) | Error::Config(_) | Error::Json(_) | Error::Parse { .. } => {
                StatusCode::BAD_REQUEST
            }
            Error::Divergence { .. } | Error::TrainingDiverged { .. } | Error::Singular(_) | Error::Degenerate(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let code = match status {
            StatusCode::BAD_REQUEST => "bad_request",
            StatusCode::UNPROCESSABLE_ENTITY => "numerical_failure",
            _ => "internal",
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::Cell { source, .. } => root(source),
        other => other,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

#[derive(Debug, Deserialize)]
struct VersionQuery {
    version: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    pub country: String,
    pub model: ModelKind,
    pub horizon: usize,
    #[serde(default)]
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub country: String,
    pub spec: ScenarioSpec,
    #[serde(default)]
    pub version: Option<u64>,
    /// Fine-tune settings for augmented scenarios.
    #[serde(default)]
    pub config: Option<TrainConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneRequest {
    pub country: String,
    pub spec: ScenarioSpec,
    #[serde(default)]
    pub config: Option<TrainConfig>,
    #[serde(default)]
    pub version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub country: String,
    pub kinds: Vec<ModelKind>,
    pub latest_version: u64,
    pub train_start: i32,
    pub train_end: i32,
    pub params_hash: String,
}

/// Observed panel in physical units; `null` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelView {
    pub country: String,
    pub years: Vec<i32>,
    pub variables: BTreeMap<VariableId, Vec<Option<f64>>>,
    pub emissions: Vec<Option<f64>>,
}

impl PanelView {
    pub fn new(panel: &Panel) -> Self {
        let cell = |k: usize, j: usize| panel.mask()[k][j].then(|| panel.values()[k][j]);
        let variables = VariableId::ALL
            .iter()
            .map(|v| (*v, (0..panel.len()).map(|k| cell(k, v.index())).collect()))
            .collect();
        let emissions = (0..panel.len())
            .map(|k| {
                panel.mask()[k][..4]
                    .iter()
                    .all(|m| *m)
                    .then(|| kaya_recompose(&panel.values()[k]))
            })
            .collect();
        PanelView {
            country: panel.country().to_string(),
            years: panel.years().to_vec(),
            variables,
            emissions,
        }
    }
}

async fn countries(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(state.panels.keys().cloned().collect())
}

async fn panel(State(state): State<Arc<AppState>>, UrlPath(country): UrlPath<String>) -> ApiResult<Json<PanelView>> {
    Ok(Json(PanelView::new(state.panel(&country)?)))
}

async fn models(State(state): State<Arc<AppState>>) -> Json<Vec<ModelInfo>> {
    let infos = state
        .models
        .iter()
        .filter_map(|(country, slot)| {
            let (version, bundle) = slot.snapshot(None)?;
            let mut kinds = vec![ModelKind::Node];
            if bundle.var.is_some() {
                kinds.push(ModelKind::Var);
            }
            Some(ModelInfo {
                country: country.clone(),
                kinds,
                latest_version: version,
                train_start: bundle.node.train_start,
                train_end: bundle.node.train_end,
                params_hash: bundle.node.params_hash(),
            })
        })
        .collect();
    Json(infos)
}

async fn forecast(
    State(state): State<Arc<AppState>>,
    Query(query): Query<VersionQuery>,
    body: Bytes,
) -> ApiResult<Json<ForecastResult>> {
    let req: ForecastRequest = parse_body(&body)?;
    if req.horizon == 0 || req.horizon > MAX_HORIZON {
        return Err(ApiError::bad_request(format!(
            "horizon must be within 1..={MAX_HORIZON}"
        )));
    }
    let (version, bundle) = state.snapshot(&req.country, req.version.or(query.version))?;
    if req.model == ModelKind::Var && bundle.var.is_none() {
        return Err(ApiError::not_found(format!("no VAR model for country {}", req.country)));
    }
    let mut result = bundle.forecast(req.model, req.horizon)?;
    result.metadata.version = Some(version);
    Ok(Json(result))
}

async fn scenario(
    State(state): State<Arc<AppState>>,
    Query(query): Query<VersionQuery>,
    body: Bytes,
) -> ApiResult<Json<ForecastResult>> {
    let req: ScenarioRequest = parse_body(&body)?;
    req.spec.validate()?;
    let (version, bundle) = state.snapshot(&req.country, req.version.or(query.version))?;
    let mut result = match req.spec.mode {
        ScenarioMode::Pinned => pinned_forecast_result(&bundle.node, &req.spec)?,
        ScenarioMode::Augmented => {
            let panel = state.panel(&req.country)?.clone();
            let cfg = req.config.unwrap_or_default();
            cfg.validate()?;
            let spec = req.spec;
            tokio::task::spawn_blocking(move || -> Result<ForecastResult> {
                let outcome = run_augmented_scenario(&bundle.node, &panel, &spec, &cfg)?;
                let last = spec
                    .observations
                    .iter()
                    .map(|o| o.0)
                    .max()
                    .unwrap_or(0)
                    .max(panel.last_year());
                let horizon = (last - outcome.model.train_end).max(0) as usize;
                crate::model::node_forecast_result(&outcome.model, horizon)
            })
            .await
            .map_err(|e| ApiError::from(Error::Config(format!("scenario task failed: {e}"))))??
        }
    };
    result.metadata.version = Some(version);
    Ok(Json(result))
}

async fn finetune(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: FinetuneRequest = parse_body(&body)?;
    req.spec.validate()?;
    if req.spec.mode != ScenarioMode::Augmented {
        return Err(ApiError::bad_request("fine-tuning needs an augmented scenario"));
    }
    let cfg = req.config.clone().unwrap_or_default();
    cfg.validate()?;
    let slot = state.slot(&req.country)?;
    let panel = state.panel(&req.country)?.clone();
    let (base_version, _) = state.snapshot(&req.country, req.version)?;

    if slot.pending.fetch_add(1, Ordering::SeqCst) >= state.queue_capacity {
        slot.pending.fetch_sub(1, Ordering::SeqCst);
        return Err(ApiError {
            status: StatusCode::TOO_MANY_REQUESTS,
            code: "queue_full",
            message: format!("fine-tune queue for {} is full", req.country),
        });
    }
    let id = state.next_job.fetch_add(1, Ordering::SeqCst);
    state.jobs.lock().expect("lock poisoned").insert(
        id,
        JobRecord {
            id,
            country: req.country.clone(),
            base_version,
            state: JobState::Queued,
        },
    );
    let job_state = state.clone();
    tokio::spawn(async move {
        let state = job_state;
        let slot = state.slot(&req.country).expect("slot exists");
        let _writer = slot.writer.lock().await;
        state.set_job(id, JobState::Running);
        let (_, base) = slot
            .snapshot(Some(base_version))
            .expect("published versions are never removed");
        let spec = req.spec;
        let outcome = tokio::task::spawn_blocking(move || {
            run_augmented_scenario(&base.node, &panel, &spec, &cfg).map(|o| (base, o))
        })
        .await;
        let final_state = match outcome {
            Ok(Ok((base, outcome))) => {
                let bundle = ModelBundle::new(outcome.model, base.var.clone());
                let version = slot.publish(bundle);
                log::info!("job {id}: published {} version {version}", req.country);
                JobState::Succeeded {
                    version,
                    before: outcome.before,
                    after: outcome.after,
                    final_loss: outcome.report.final_loss(),
                }
            }
            Ok(Err(e)) => JobState::Failed { error: e.to_string() },
            Err(e) => JobState::Failed {
                error: format!("job panicked: {e}"),
            },
        };
        state.set_job(id, final_state);
        slot.pending.fetch_sub(1, Ordering::SeqCst);
    });
    Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "job_id": id }))))
}

async fn job(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobRecord>> {
    let id: u64 = id
        .parse()
        .map_err(|_| ApiError::bad_request(format!("job id `{id}` is not a number")))?;
    state
        .job(id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no job {id}")))
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/countries", get(countries))
        .route("/api/panel/{country}", get(panel))
        .route("/api/models", get(models))
        .route("/api/forecast", post(forecast))
        .route("/api/scenario", post(scenario))
        .route("/api/finetune", post(finetune))
        .route("/api/jobs/{id}", get(job))
        .fallback(fallback)
        .with_state(state)
}

/// Loads the data directory and serves until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> Result<()> {
    let state = Arc::new(AppState::load(&cfg.data_dir, cfg.queue_capacity)?);
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshots_are_versioned() {
        let panel = crate::data::generate_synthetic_panel(1, 1, crate::data::DynamicsKind::Linear)
            .unwrap()
            .remove(0);
        let prepared = crate::model::prepare(&panel, 2010).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            hidden: vec![4],
            ..Default::default()
        };
        let node = crate::model::fit_node(&prepared, &cfg).unwrap().0;
        let slot = ModelSlot::new(ModelBundle::new(node.clone(), None));
        let (v, first) = slot.snapshot(None).unwrap();
        assert_eq!(v, 1);
        let mut changed = node;
        changed.params.scale(2.0);
        assert_eq!(slot.publish(ModelBundle::new(changed, None)), 2);
        assert_eq!(slot.snapshot(None).unwrap().0, 2);
        assert!(Arc::ptr_eq(&slot.snapshot(Some(1)).unwrap().1, &first));
        assert!(slot.snapshot(Some(0)).is_none());
        assert!(slot.snapshot(Some(3)).is_none());
    }

    #[test]
    fn panel_view_marks_missing() {
        let mut rows = vec![[1.0, 2.0, 3.0, 4.0, 0.5, 0.25, 0.25]; 3];
        let mut mask = vec![[true; crate::data::NUM_VARS]; 3];
        rows[1][2] = f64::NAN;
        mask[1][2] = false;
        let panel = Panel::new("AAA", vec![2000, 2001, 2002], rows, mask).unwrap();
        let view = PanelView::new(&panel);
        assert_eq!(
            view.variables[&VariableId::EnergyIntensity],
            vec![Some(3.0), None, Some(3.0)]
        );
        assert_eq!(view.emissions, vec![Some(24.0), None, Some(24.0)]);
        assert_eq!(view.variables.len(), crate::data::NUM_VARS);
    }
}
