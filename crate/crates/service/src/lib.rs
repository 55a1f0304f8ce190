//! HTTP job service around the inversion pipeline.
//!
//! | route | |
//! |---|---|
//! | `POST /jobs` | submit a [`JobRequest`]; 202 with the job status |
//! | `GET /jobs/{id}` | state and progress counters |
//! | `DELETE /jobs/{id}` | request cancellation (idempotent) |
//! | `GET /jobs/{id}/result` | the result payload; 409 until the job is done |
//! | `GET /jobs/{id}/events?since=V&timeout_ms=T` | long-poll for a status newer than version `V` |

pub mod jobs;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub use jobs::{JobRequest, JobState, JobStatus, Jobs, Progress};

/// Longest wait the events endpoint grants.
pub const MAX_POLL: Duration = Duration::from_secs(60);
const DEFAULT_POLL: Duration = Duration::from_secs(25);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub workers: usize,
    /// Finished results are saved here and reloaded on start.
    pub data_dir: Option<PathBuf>,
}

/// Start the workers and build the router. Must run inside a tokio runtime.
pub fn app(config: &ServiceConfig) -> std::io::Result<Router> {
    Ok(router(Jobs::start(config.workers, config.data_dir.clone())?))
}

pub fn router(jobs: Arc<Jobs>) -> Router {
    Router::new()
        .route("/jobs", axum::routing::post(submit))
        .route("/jobs/{id}", get(status).delete(cancel))
        .route("/jobs/{id}/result", get(result))
        .route("/jobs/{id}/events", get(events))
        .with_state(jobs)
}

#[derive(Debug, Serialize)]
struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            error: error.into(),
            field: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no job `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn job(jobs: &Jobs, id: &str) -> ApiResult<Arc<jobs::JobCell>> {
    jobs.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn submit(State(jobs): State<Arc<Jobs>>, body: Bytes) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let request: JobRequest = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            error: e.inner().to_string(),
            field: (path != ".").then_some(path),
        }
    })?;
    let prepared = request.prepare().map_err(|r| ApiError {
        status: StatusCode::UNPROCESSABLE_ENTITY,
        error: r.message,
        field: r.field,
    })?;
    Ok((StatusCode::ACCEPTED, Json(jobs.submit(prepared))))
}

async fn status(State(jobs): State<Arc<Jobs>>, Path(id): Path<String>) -> ApiResult<Json<JobStatus>> {
    Ok(Json(job(&jobs, &id)?.status()))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CancelAck {
    pub id: String,
    pub cancel_requested: bool,
}

async fn cancel(State(jobs): State<Arc<Jobs>>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<CancelAck>)> {
    job(&jobs, &id)?.cancel();
    Ok((
        StatusCode::ACCEPTED,
        Json(CancelAck {
            id,
            cancel_requested: true,
        }),
    ))
}

async fn result(State(jobs): State<Arc<Jobs>>, Path(id): Path<String>) -> ApiResult<Response> {
    let cell = job(&jobs, &id)?;
    match cell.result() {
        Some(payload) => Ok(Json(&*payload).into_response()),
        None => {
            let state = cell.status().state;
            Err(ApiError::new(StatusCode::CONFLICT, format!("job is {}", state.as_str())))
        }
    }
}

#[derive(Debug, Deserialize)]
struct PollQuery {
    #[serde(default)]
    since: Option<u64>,
    #[serde(default)]
    timeout_ms: Option<u64>,
}

/// Answer once the status version exceeds `since` or the job is finished,
/// else with the unchanged status after the timeout.
async fn events(
    State(jobs): State<Arc<Jobs>>,
    Path(id): Path<String>,
    Query(q): Query<PollQuery>,
) -> ApiResult<Json<JobStatus>> {
    let cell = job(&jobs, &id)?;
    let mut rx = cell.subscribe();
    let since = q.since.unwrap_or(0);
    let wait = q.timeout_ms.map_or(DEFAULT_POLL, Duration::from_millis).min(MAX_POLL);
    let ready = |s: &JobStatus| s.version > since || s.state.is_terminal();
    let _ = tokio::time::timeout(wait, rx.wait_for(ready)).await;
    Ok(Json(cell.status()))
}
