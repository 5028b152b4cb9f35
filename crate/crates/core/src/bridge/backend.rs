//! Completion backends: a chat-completion HTTP client and a scripted
//! fixture table for tests.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::canonical::CanonicalSynthesizer;
use crate::toolbox::Policies;

pub const API_KEY_ENV: &str = "GUARD_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("network error talking to the model endpoint: {0}")]
    Network(String),
    #[error("model endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("model endpoint response is malformed: {0}")]
    Malformed(String),
    #[error("no scripted response for prompt fingerprint {0}")]
    MissingFixture(String),
    #[error("backend cannot answer this prompt: {0}")]
    Unsupported(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

/// Completes one prompt. Implementations make a single attempt; retries are
/// left to callers.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;

    fn name(&self) -> &'static str;
}

/// Which backend completes prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    HttpChat(HttpConfig),
    Scripted { fixtures: PathBuf },
    CanonicalSynthesizer,
}

impl BackendChoice {
    pub fn build(&self, policies: &Policies) -> Result<Arc<dyn LlmBackend>, BackendError> {
        Ok(match self {
            Self::HttpChat(config) => Arc::new(HttpChatBackend::new(config.clone())?),
            Self::Scripted { fixtures } => Arc::new(ScriptedBackend::from_file(fixtures)?),
            Self::CanonicalSynthesizer => Arc::new(CanonicalSynthesizer::new(policies.clone())),
        })
    }
}

/// Hex SHA-256 of the prompt with every whitespace run collapsed to a single
/// space and the ends trimmed.
pub fn fingerprint(prompt: &str) -> String {
    let normalized = prompt.split_whitespace().collect::<Vec<_>>().join(" ");
    Sha256::digest(normalized.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Fixtures {
    Table(HashMap<String, String>),
    Sequence(Vec<String>),
}

/// Answers from a fingerprint table, or from a fixed sequence of responses
/// handed out in call order. Records every prompt it receives.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    table: HashMap<String, String>,
    sequence: Mutex<VecDeque<String>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    /// Table keyed by [`fingerprint`]s.
    pub fn from_table(table: HashMap<String, String>) -> Self {
        Self { table, ..Self::default() }
    }

    /// Table keyed by the prompts themselves.
    pub fn from_prompts<I, P, R>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, R)>,
        P: AsRef<str>,
        R: Into<String>,
    {
        Self::from_table(pairs.into_iter().map(|(p, r)| (fingerprint(p.as_ref()), r.into())).collect())
    }

    /// Reads either a JSON object mapping fingerprints to responses or a
    /// JSON array of responses served in call order.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read fixtures {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Fixtures::Table(table)) => Ok(Self::from_table(table)),
            Ok(Fixtures::Sequence(seq)) => Ok(Self::sequence(seq)),
            Err(e) => Err(BackendError::Config(format!(
                "fixtures {} are neither a JSON object nor an array of strings: {e}",
                path.display()
            ))),
        }
    }

    pub fn sequence<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            sequence: Mutex::new(responses.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    /// Prompts received so far, in order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.lock().unwrap_or_else(|p| p.into_inner()).push(prompt.to_string());
        let fp = fingerprint(prompt);
        if let Some(r) = self.table.get(&fp) {
            return Ok(r.clone());
        }
        self.sequence
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .pop_front()
            .ok_or(BackendError::MissingFixture(fp))
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    120
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            max_in_flight: default_max_in_flight(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GatePass<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        GatePass(self)
    }
}

struct GatePass<'a>(&'a Gate);

impl Drop for GatePass<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// OpenAI-style `POST {base}/chat/completions` client at temperature 0.
/// The bearer token is read from `GUARD_LLM_API_KEY` when set.
#[derive(Debug)]
pub struct HttpChatBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
    gate: Gate,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f32,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

impl HttpChatBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        Self::with_api_key(config, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn with_api_key(config: HttpConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        if config.base_url.trim().is_empty() {
            return Err(BackendError::Config("base URL is empty".into()));
        }
        if config.model.trim().is_empty() {
            return Err(BackendError::Config("model id is empty".into()));
        }
        let slots = config.max_in_flight.max(1);
        Ok(Self {
            config,
            api_key,
            client: OnceLock::new(),
            gate: Gate { free: Mutex::new(slots), cv: Condvar::new() },
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    // Built on first use so that constructing the backend inside an async
    // runtime does not create the blocking client's internal runtime there.
    fn client(&self) -> Result<&reqwest::blocking::Client, BackendError> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(self.config.timeout_secs))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| BackendError::Config(e.clone()))
    }
}

impl LlmBackend for HttpChatBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let client = self.client()?;
        let _pass = self.gate.acquire();
        let body = ChatRequest {
            model: &self.config.model,
            temperature: 0.0,
            messages: [ChatMessage { role: "user", content: prompt }],
        };
        let mut req = client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status { status: status.as_u16(), body: text });
        }
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        json.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }

    fn name(&self) -> &'static str {
        "http"
    }
}
