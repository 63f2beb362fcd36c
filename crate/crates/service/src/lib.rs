//! HTTP front end: submit a problem, poll the job, then query the finished
//! CDF pointwise, by quantile, as a density or as CSV.
//!
//! Solves run on the blocking pool; the job table only holds finished results
//! behind `Arc`, so queries never wait on a running solve.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use poisint_core::density::{central_difference_density, smooth_density, DEFAULT_DELTA1_STEPS};
use poisint_core::io::cdf_to_csv;
use poisint_core::{Composed, ConfigError, FieldError, Mesh, RunConfig};
use poisint_core::model::Atom;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;
use uuid::Uuid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug)]
struct Job {
    config: RunConfig,
    status: JobStatus,
    result: Option<Arc<Composed>>,
    error: Option<String>,
    submitted: Instant,
    started: Option<Instant>,
    finished: Option<Instant>,
}

#[derive(Clone, Default)]
pub struct AppState {
    jobs: Arc<RwLock<HashMap<String, Job>>>,
}

impl AppState {
    pub fn new() -> AppState {
        AppState::default()
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.jobs.write().get_mut(id) {
            f(job);
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/solve", post(submit))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/cdf", get(cdf_at))
        .route("/jobs/{id}/quantile", get(quantile))
        .route("/jobs/{id}/density", get(density))
        .route("/jobs/{id}/csv", get(csv))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new())).await
}

#[derive(Debug)]
enum ApiError {
    BadRequest(Vec<FieldError>),
    Unstable { margin: f64, product: f64 },
    NotFound(String),
    NotReady { id: String, status: JobStatus, error: Option<String> },
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::BadRequest(errors) => {
                (StatusCode::BAD_REQUEST, Json(json!({ "errors": errors }))).into_response()
            }
            ApiError::Unstable { margin, product } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(json!({
                    "error": format!("stability violation: h * n* = {product} >= 1"),
                    "margin": margin,
                    "product": product,
                })),
            )
                .into_response(),
            ApiError::NotFound(id) => (
                StatusCode::NOT_FOUND,
                Json(json!({ "error": format!("no job with id {id}") })),
            )
                .into_response(),
            ApiError::NotReady { id, status, error } => (
                StatusCode::CONFLICT,
                Json(json!({
                    "error": format!("job {id} is not done"),
                    "status": status,
                    "job_error": error,
                })),
            )
                .into_response(),
        }
    }
}

fn bad(field: &str, message: impl Into<String>) -> ApiError {
    ApiError::BadRequest(vec![FieldError {
        field: field.into(),
        message: message.into(),
        offset: None,
    }])
}

async fn submit(
    State(state): State<AppState>,
    body: Result<Json<RunConfig>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(config) = body.map_err(|e| bad("body", e.body_text()))?;
    let prepared = config.prepare().map_err(|e| match e {
        ConfigError::Fields(errors) => ApiError::BadRequest(errors),
        ConfigError::Stability { margin, product } => ApiError::Unstable { margin, product },
    })?;
    let id = Uuid::new_v4().to_string();
    state.jobs.write().insert(
        id.clone(),
        Job {
            config,
            status: JobStatus::Pending,
            result: None,
            error: None,
            submitted: Instant::now(),
            started: None,
            finished: None,
        },
    );
    let worker = state.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || {
        worker.update(&job_id, |j| {
            j.status = JobStatus::Running;
            j.started = Some(Instant::now());
        });
        let outcome = prepared.solve();
        worker.update(&job_id, |j| {
            j.finished = Some(Instant::now());
            match outcome {
                Ok(done) => {
                    j.status = JobStatus::Done;
                    j.result = Some(Arc::new(done));
                }
                Err(e) => {
                    j.status = JobStatus::Failed;
                    j.error = Some(e.to_string());
                }
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id }))))
}

#[derive(Serialize)]
struct ResultSummary {
    mesh: Mesh,
    atoms: Vec<Atom>,
    mass_captured: f64,
    stability_margin: f64,
    steps: usize,
    warnings: Vec<String>,
}

async fn job_status(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let jobs = state.jobs.read();
    let job = jobs.get(&id).ok_or_else(|| ApiError::NotFound(id.clone()))?;
    let ms = |a: Option<Instant>, b: Option<Instant>| match (a, b) {
        (Some(a), Some(b)) => Some(b.duration_since(a).as_secs_f64() * 1e3),
        _ => None,
    };
    let result = job.result.as_ref().map(|r| ResultSummary {
        mesh: *r.grid.mesh(),
        atoms: r.grid.atoms().to_vec(),
        mass_captured: r.grid.mass_captured(),
        stability_margin: r.report.stability_margin,
        steps: r.report.steps,
        warnings: r.report.warnings.iter().map(|w| w.to_string()).collect(),
    });
    Ok(Json(json!({
        "id": id,
        "status": job.status,
        "config": job.config,
        "error": job.error,
        "timings": {
            "queued_ms": ms(Some(job.submitted), job.started),
            "run_ms": ms(job.started, job.finished),
        },
        "result": result,
    })))
}

fn finished(state: &AppState, id: &str) -> Result<Arc<Composed>, ApiError> {
    let jobs = state.jobs.read();
    let job = jobs.get(id).ok_or_else(|| ApiError::NotFound(id.to_string()))?;
    job.result.clone().ok_or_else(|| ApiError::NotReady {
        id: id.to_string(),
        status: job.status,
        error: job.error.clone(),
    })
}

#[derive(Deserialize)]
struct CdfQuery {
    x: f64,
}

async fn cdf_at(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CdfQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let done = finished(&state, &id)?;
    if !q.x.is_finite() {
        return Err(bad("x", "must be finite"));
    }
    let grid = &done.grid;
    let beyond = q.x > grid.mesh().x_max();
    Ok(Json(json!({ "x": q.x, "F": grid.value_at(q.x), "beyond_mesh": beyond })))
}

#[derive(Deserialize)]
struct QuantileQuery {
    p: f64,
}

async fn quantile(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<QuantileQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let done = finished(&state, &id)?;
    if !(0.0..=1.0).contains(&q.p) {
        return Err(bad("p", format!("must lie in [0, 1], got {}", q.p)));
    }
    Ok(Json(json!({ "p": q.p, "x": done.grid.quantile(q.p) })))
}

#[derive(Deserialize)]
struct DensityQuery {
    window: Option<f64>,
    delta1: Option<f64>,
}

async fn density(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<DensityQuery>,
) -> Result<Response, ApiError> {
    let done = finished(&state, &id)?;
    let delta = done.grid.mesh().delta();
    let delta1 = q.delta1.unwrap_or(DEFAULT_DELTA1_STEPS * delta);
    let raw = central_difference_density(&done.grid, delta1).map_err(|e| bad("delta1", e.to_string()))?;
    let out = match q.window {
        Some(w) => smooth_density(&raw, w).map_err(|e| bad("window", e.to_string()))?,
        None => raw,
    };
    Ok(Json(out).into_response())
}

async fn csv(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let done = finished(&state, &id)?;
    Ok((
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
        cdf_to_csv(&done.grid),
    )
        .into_response())
}
