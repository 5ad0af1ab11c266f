//! HTTP job service.
//!
//! ```text
//! POST /api/jobs        JobRequest -> 202 {job_id}, 422 {error, field}
//! GET  /api/jobs        [{id, state}]
//! GET  /api/jobs/{id}   Job, 404 when unknown
//! GET  /api/health      {status: "ok"}
//! GET  /api/palette     brush colors used by the sketch parser
//! GET  /*               static files from the configured directory
//! ```
//!
//! Jobs run on the blocking pool, at most `workers` at a time, and write
//! their artifacts to `<out_root>/<job_id>/`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;
use topoforge::pipeline::BatchSummary;
use topoforge::{GenerationParams, Grid, Palette};
use tower_http::services::ServeDir;

use crate::config::{BackendKind, Settings};
use crate::run::{self, now_unix_ms, RunEntry, SolveInput};

pub const MAX_BATCH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    /// Queued → Running → Done | Failed.
    pub fn can_advance_to(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Running, JobState::Done | JobState::Failed)
        )
    }
}

fn default_angle() -> f64 {
    270.0
}

fn default_strength() -> f64 {
    topoforge::pipeline::DEFAULT_STRENGTH
}

fn default_batch() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRequest {
    pub sketch_png_b64: String,
    #[serde(default)]
    pub mask_png_b64: Option<String>,
    #[serde(default)]
    pub prior_png_b64: Option<String>,
    pub volume_fraction: f64,
    #[serde(default = "default_angle")]
    pub load_angle_deg: f64,
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default = "default_batch")]
    pub batch_count: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// `NxM`; the service default when absent.
    #[serde(default)]
    pub grid: Option<String>,
}

/// A request rejected before queueing, naming the offending field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub error: String,
}

fn field_error(field: &str, error: impl Into<String>) -> FieldError {
    FieldError {
        field: field.to_string(),
        error: error.into(),
    }
}

fn decode_b64(field: &str, value: &str) -> Result<Vec<u8>, FieldError> {
    B64.decode(value.trim())
        .map_err(|e| field_error(field, format!("not base64: {e}")))
}

impl JobRequest {
    /// Validate against the service settings and build the runner input.
    pub fn to_input(&self, base: &Settings) -> Result<SolveInput, FieldError> {
        if !(self.volume_fraction > 0.0 && self.volume_fraction <= 1.0) {
            return Err(field_error(
                "volume_fraction",
                format!("volume_fraction {} outside (0, 1]", self.volume_fraction),
            ));
        }
        if !self.load_angle_deg.is_finite() {
            return Err(field_error("load_angle_deg", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(field_error(
                "strength",
                format!("strength {} outside [0, 1]", self.strength),
            ));
        }
        if !(1..=MAX_BATCH).contains(&self.batch_count) {
            return Err(field_error(
                "batch_count",
                format!("batch_count must be in 1..={MAX_BATCH}"),
            ));
        }
        if self.backend == BackendKind::Remote && base.remote_url.is_none() {
            return Err(field_error("backend", "no remote backend is configured"));
        }
        let grid = match &self.grid {
            Some(g) => g.parse::<Grid>().map_err(|e| field_error("grid", e))?,
            None => base.grid.unwrap_or(Grid::CANONICAL),
        };
        let settings = Settings {
            vf: self.volume_fraction,
            load_angle: self.load_angle_deg,
            strength: self.strength,
            batch: self.batch_count,
            seed: self.seed,
            backend: self.backend,
            grid: Some(grid),
            ..base.clone()
        };
        let params = settings
            .generation_params()
            .map_err(|e| field_error("backend", e.to_string()))?;
        Ok(SolveInput {
            sketch_png: decode_b64("sketch_png_b64", &self.sketch_png_b64)?,
            mask_png: self
                .mask_png_b64
                .as_deref()
                .map(|m| decode_b64("mask_png_b64", m))
                .transpose()?,
            prior_png: self
                .prior_png_b64
                .as_deref()
                .map(|p| decode_b64("prior_png_b64", p))
                .transpose()?,
            grid,
            params,
            threshold: base.threshold,
        })
    }
}

/// Per-run result as shown to clients. `compliance` is `null` when the
/// structure carries no load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub run_id: usize,
    pub seed: Option<u64>,
    pub structure_png_b64: String,
    /// Relative to the job's run directory.
    pub structure_path: String,
    pub compliance: Option<f64>,
    pub vf_global_pct: f64,
    pub vf_editable_pct: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub prior_drift: Option<f64>,
    pub entry: RunEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub created_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
    pub params: GenerationParams,
    pub grid: Grid,
    pub run_dir: String,
    pub results: Vec<JobResult>,
    pub summary: Option<BatchSummary>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub settings: Settings,
    pub out_root: PathBuf,
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn from_settings(settings: Settings) -> Self {
        ServiceConfig {
            out_root: settings
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("runs")),
            static_dir: settings.static_dir.clone(),
            settings,
        }
    }
}

pub struct AppState {
    config: ServiceConfig,
    jobs: RwLock<HashMap<String, Job>>,
    slots: Semaphore,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        let workers = config.settings.workers.max(1);
        Arc::new(AppState {
            config,
            jobs: RwLock::new(HashMap::new()),
            slots: Semaphore::new(workers),
        })
    }

    pub fn job(&self, id: &str) -> Option<Job> {
        self.jobs.read().expect("job store lock").get(id).cloned()
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.jobs.write().expect("job store lock").get_mut(id) {
            f(job);
        }
    }

    fn advance(&self, id: &str, next: JobState, f: impl FnOnce(&mut Job)) {
        self.update(id, |job| {
            debug_assert!(
                job.state.can_advance_to(next),
                "{:?} -> {next:?}",
                job.state
            );
            job.state = next;
            f(job);
        });
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/jobs", get(list_jobs).post(create_job))
        .route("/api/jobs/{id}", get(get_job))
        .route(
            "/api/health",
            get(|| async { Json(json!({"status": "ok"})) }),
        )
        .route("/api/palette", get(|| async { Json(Palette::default()) }))
        .with_state(state.clone());
    match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { error(StatusCode::NOT_FOUND, "not found") }),
    }
}

/// Serve on an already bound listener until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({"error": msg.into()}))).into_response()
}

async fn list_jobs(State(state): State<Arc<AppState>>) -> Json<Vec<serde_json::Value>> {
    let jobs = state.jobs.read().expect("job store lock");
    let mut list: Vec<&Job> = jobs.values().collect();
    list.sort_by(|a, b| (a.created_unix_ms, &a.id).cmp(&(b.created_unix_ms, &b.id)));
    Json(
        list.iter()
            .map(|j| json!({"id": j.id, "state": j.state}))
            .collect(),
    )
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.job(&id) {
        Some(job) => Json(job).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no job `{id}`")),
    }
}

async fn create_job(
    State(state): State<Arc<AppState>>,
    body: Result<Json<JobRequest>, JsonRejection>,
) -> Response {
    let Json(request) = match body {
        Ok(b) => b,
        Err(rejection) => return error(rejection.status(), rejection.body_text()),
    };
    let input = match request.to_input(&state.config.settings) {
        Ok(i) => i,
        Err(e) => return (StatusCode::UNPROCESSABLE_ENTITY, Json(e)).into_response(),
    };
    // parsing is cheap; reject bad sketches before queueing
    let prepared = match run::prepare(&input) {
        Ok(p) => p,
        Err(e) => {
            let field = match &e {
                run::SolveError::InvalidSketch(m) if m.starts_with("mask") => "mask_png_b64",
                run::SolveError::InvalidSketch(_) => "sketch_png_b64",
                run::SolveError::InvalidRequest(m) if m.starts_with("prior") => "prior_png_b64",
                _ => "request",
            };
            return (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(field_error(field, e.to_string())),
            )
                .into_response();
        }
    };

    let id = uuid::Uuid::new_v4().simple().to_string();
    let job = Job {
        id: id.clone(),
        state: JobState::Queued,
        created_unix_ms: now_unix_ms(),
        finished_unix_ms: None,
        params: input.params.clone(),
        grid: input.grid,
        run_dir: id.clone(),
        results: Vec::new(),
        summary: None,
        warnings: prepared.warnings.clone(),
        error: None,
    };
    state
        .jobs
        .write()
        .expect("job store lock")
        .insert(id.clone(), job);
    tokio::spawn(run_job(state.clone(), id.clone(), input, prepared));
    (
        StatusCode::ACCEPTED,
        [(header::LOCATION, format!("/api/jobs/{id}"))],
        Json(json!({"job_id": id})),
    )
        .into_response()
}

async fn run_job(state: Arc<AppState>, id: String, input: SolveInput, prepared: run::Prepared) {
    let _permit = state
        .slots
        .acquire()
        .await
        .expect("semaphore is never closed");
    state.advance(&id, JobState::Running, |_| {});
    let dir = state.config.out_root.join(&id);
    let work =
        tokio::task::spawn_blocking(move || -> Result<run::SolveOutcome, run::SolveError> {
            let outcome = run::execute(&prepared, &input)?;
            std::fs::create_dir_all(&dir)?;
            run::write_run_dir(&dir, &input, &outcome)?;
            Ok(outcome)
        })
        .await;
    let finished = now_unix_ms();
    match work {
        Ok(Ok(outcome)) => match outcome.failure() {
            Some(e) => state.advance(&id, JobState::Failed, |job| {
                job.error = Some(e.to_string());
                job.finished_unix_ms = Some(finished);
            }),
            None => state.advance(&id, JobState::Done, |job| {
                job.results = results(&outcome);
                job.summary = Some(outcome.stats.summary());
                job.finished_unix_ms = Some(finished);
            }),
        },
        Ok(Err(e)) => state.advance(&id, JobState::Failed, |job| {
            job.error = Some(e.to_string());
            job.finished_unix_ms = Some(finished);
        }),
        Err(join) => state.advance(&id, JobState::Failed, |job| {
            job.error = Some(format!("job panicked: {join}"));
            job.finished_unix_ms = Some(finished);
        }),
    }
}

fn results(outcome: &run::SolveOutcome) -> Vec<JobResult> {
    outcome
        .entries
        .iter()
        .zip(&outcome.structures)
        .filter_map(|(e, png)| {
            let report = e.report.as_ref()?;
            Some(JobResult {
                run_id: e.run_id,
                seed: e.seed,
                structure_png_b64: B64.encode(png.as_ref()?),
                structure_path: e.structure.clone()?,
                compliance: report.compliance.is_finite().then_some(report.compliance),
                vf_global_pct: 100.0 * report.vf_global,
                vf_editable_pct: report.vf_editable.map(|v| 100.0 * v),
                converged: e.converged,
                iterations: e.iterations,
                prior_drift: e.prior_drift,
                entry: e.clone(),
            })
        })
        .collect()
}
