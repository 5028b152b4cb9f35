//! Async client for the warden guard service.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use warden_core::api::{
    EvalBody, EvalReply, ErrorBody, GuardBody, GuardReply, Health, MemoryInserted, MemoryList, ScoreBody, ScoreReport,
};
use warden_core::bench::GuardCase;
use warden_core::evaluator::{RunRecord, ScoreOptions};
use warden_core::memory::NewEntry;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid service URL {0:?}")]
    BadUrl(String),
    #[error("cannot reach the guard service: {0}")]
    Transport(#[source] reqwest::Error),
    #[error("guard service answered HTTP {status}: {}", body.message)]
    Api { status: u16, body: ErrorBody },
    #[error("guard service reply is malformed: {0}")]
    Decode(String),
}

impl ClientError {
    /// The service error code, when the service answered with one.
    pub fn code(&self) -> Option<&str> {
        match self {
            Self::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GuardClient {
    base: String,
    http: reqwest::Client,
}

impl GuardClient {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let base = base_url.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::BadUrl(base_url.to_string()));
        }
        Ok(Self { base, http: reqwest::Client::new() })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(body) = body {
            req = req.json(body);
        }
        let resp = req.send().await.map_err(ClientError::Transport)?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(ClientError::Transport)?;
        if status != StatusCode::OK {
            let body = serde_json::from_slice::<ErrorBody>(&bytes).unwrap_or_else(|_| ErrorBody {
                code: "http".into(),
                message: String::from_utf8_lossy(&bytes).into_owned(),
                exec_stats: None,
            });
            return Err(ClientError::Api { status: status.as_u16(), body });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.call::<(), _>(Method::GET, "/healthz", None).await
    }

    pub async fn guard(&self, body: &GuardBody) -> Result<GuardReply, ClientError> {
        self.call(Method::POST, "/v1/guard", Some(body)).await
    }

    pub async fn guard_case(&self, case: &GuardCase) -> Result<GuardReply, ClientError> {
        self.guard(&GuardBody::from(case)).await
    }

    pub async fn eval(&self, cases: Vec<GuardCase>, options: ScoreOptions) -> Result<EvalReply, ClientError> {
        self.call(Method::POST, "/v1/eval", Some(&EvalBody { cases, options })).await
    }

    pub async fn score(&self, records: Vec<RunRecord>, options: ScoreOptions) -> Result<ScoreReport, ClientError> {
        self.call(Method::POST, "/v1/score", Some(&ScoreBody { records, options })).await
    }

    pub async fn memory(&self) -> Result<MemoryList, ClientError> {
        self.call::<(), _>(Method::GET, "/v1/memory", None).await
    }

    pub async fn add_memory(&self, entry: &NewEntry) -> Result<u64, ClientError> {
        let inserted: MemoryInserted = self.call(Method::POST, "/v1/memory", Some(entry)).await?;
        Ok(inserted.id)
    }
}
