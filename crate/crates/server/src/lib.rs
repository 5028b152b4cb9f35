//! HTTP guard service. Guarding runs on the blocking pool; every request
//! shares one [`GuardEngine`].

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use tokio::net::TcpListener;

use warden_core::api::{
    EvalBody, EvalReply, ErrorBody, GuardBody, GuardReply, Health, MemoryInserted, MemoryList, ScoreBody, ScoreReport,
    CODE_BACKEND, CODE_GUARD_FAILURE, CODE_INTERNAL, CODE_MALFORMED, CODE_TOO_LARGE, CODE_UNPROCESSABLE,
};
use warden_core::evaluator::EvalError;
use warden_core::gdsl::{GuardError, GuardOutcome};
use warden_core::memory::NewEntry;
use warden_core::planner::PlanningError;
use warden_core::types::{render_verdict, ExecStats, RequestKind};
use warden_core::{EngineError, GuardEngine};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 1 << 20;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    Malformed(String),
    #[error("request body exceeds {MAX_BODY_BYTES} bytes")]
    TooLarge,
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    BackendUnavailable(String),
    #[error("{message}")]
    GuardFailure { message: String, exec_stats: ExecStats },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::Malformed(_) => StatusCode::BAD_REQUEST,
            Self::TooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            Self::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Self::GuardFailure { .. } | Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            Self::Malformed(_) => CODE_MALFORMED,
            Self::TooLarge => CODE_TOO_LARGE,
            Self::Unprocessable(_) => CODE_UNPROCESSABLE,
            Self::BackendUnavailable(_) => CODE_BACKEND,
            Self::GuardFailure { .. } => CODE_GUARD_FAILURE,
            Self::Internal(_) => CODE_INTERNAL,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let exec_stats = match &self {
            Self::GuardFailure { exec_stats, .. } => Some(*exec_stats),
            _ => None,
        };
        let body = ErrorBody { code: self.code().to_string(), message: self.to_string(), exec_stats };
        (self.status(), axum::Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
            Self::TooLarge
        } else {
            Self::Malformed(rejection.body_text())
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::UnknownPolicy { .. } | EngineError::Policy(_) => Self::Unprocessable(err.to_string()),
            EngineError::Guard(GuardError::Backend(e)) => Self::BackendUnavailable(e.to_string()),
            EngineError::Guard(GuardError::Planning(PlanningError::Backend(e))) => Self::BackendUnavailable(e.to_string()),
            EngineError::Guard(GuardError::EngineUnavailable(e)) => Self::BackendUnavailable(e.to_string()),
            EngineError::Backend(e) => Self::BackendUnavailable(e.to_string()),
            other => Self::Internal(other.to_string()),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(err: EvalError) -> Self {
        Self::Unprocessable(err.to_string())
    }
}

/// JSON extractor whose rejections use [`ApiError`].
pub struct Json<T>(pub T);

impl<S, T> FromRequest<S> for Json<T>
where
    axum::Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let axum::Json(value) = axum::Json::<T>::from_request(req, state).await?;
        Ok(Json(value))
    }
}

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

type Shared = Arc<GuardEngine>;

pub fn router(engine: Shared) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/v1/guard", post(guard))
        .route("/v1/eval", post(eval))
        .route("/v1/score", post(score))
        .route("/v1/memory", get(list_memory).post(add_memory))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(engine)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    engine: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, backend = engine.backend_name(), "guard service listening");
    }
    axum::serve(listener, router(engine)).with_graceful_shutdown(shutdown).await
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn health(State(engine): State<Shared>) -> Json<Health> {
    Json(Health { status: "ok".into(), backend: engine.backend_name().into() })
}

async fn guard(State(engine): State<Shared>, Json(body): Json<GuardBody>) -> Result<Json<GuardReply>, ApiError> {
    body.agent_io.validate().map_err(|e| ApiError::Malformed(e.to_string()))?;
    blocking(move || {
        let request = body.request(engine.request_for(body.kind));
        let report = engine.guard_request(&request, &body.agent_io)?;
        match report.outcome {
            GuardOutcome::Verdict(verdict) => Ok(Json(GuardReply {
                rendered: render_verdict(&verdict, body.kind),
                verdict,
                program: report.program.source,
            })),
            GuardOutcome::Failure { exec_stats, message } => Err(ApiError::GuardFailure { message, exec_stats }),
        }
    })
    .await
}

async fn eval(State(engine): State<Shared>, Json(body): Json<EvalBody>) -> Result<Json<EvalReply>, ApiError> {
    if body.cases.is_empty() {
        return Err(EvalError::Empty.into());
    }
    for case in &body.cases {
        case.validate().map_err(ApiError::Unprocessable)?;
    }
    blocking(move || {
        let runs = engine.eval(&body.cases)?;
        Ok(Json(EvalReply::from_runs(runs, body.options)?))
    })
    .await
}

async fn score(Json(body): Json<ScoreBody>) -> Result<Json<ScoreReport>, ApiError> {
    Ok(Json(ScoreReport::from_records(&body.records, body.options)?))
}

async fn list_memory(State(engine): State<Shared>) -> Json<MemoryList> {
    Json(MemoryList { entries: engine.memory_snapshot().entries().to_vec() })
}

async fn add_memory(State(engine): State<Shared>, Json(entry): Json<NewEntry>) -> Result<Json<MemoryInserted>, ApiError> {
    if entry.agent_input.trim().is_empty() || entry.program_source.trim().is_empty() {
        return Err(ApiError::Unprocessable("agent_input and program_source must be nonempty".into()));
    }
    if !RequestKind::ALL.iter().any(|k| k.as_str() == entry.benchmark_tag) {
        return Err(ApiError::Unprocessable(format!("unknown benchmark tag {:?}", entry.benchmark_tag)));
    }
    Ok(Json(MemoryInserted { id: engine.insert_memory(entry) }))
}
