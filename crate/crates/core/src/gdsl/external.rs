//! Dispatch of guardrail source to an external interpreter process speaking
//! line-delimited JSON over stdin/stdout.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::bindings::Bindings;
use crate::types::{ErrorClass, Verdict};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub id: u64,
    pub source: String,
    pub bindings: serde_json::Value,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResponse {
    pub id: Option<u64>,
    pub status: ExecStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExternalError {
    #[error("external interpreter unavailable: {0}")]
    Unavailable(String),
    #[error("external interpreter protocol error: {0}")]
    Protocol(String),
    #[error("external interpreter timed out after {0} ms")]
    Timeout(u64),
    #[error("external interpreter exited unexpectedly: {0}")]
    Crashed(String),
    #[error("{message}")]
    Program { class: ErrorClass, message: String },
}

impl ExternalError {
    /// Execution-statistics class; `None` means the engine itself could not
    /// be started, which is not a program failure.
    pub fn class(&self) -> Option<ErrorClass> {
        match self {
            Self::Unavailable(_) => None,
            Self::Protocol(_) => Some(ErrorClass::Protocol),
            Self::Timeout(_) => Some(ErrorClass::Timeout),
            Self::Crashed(_) => Some(ErrorClass::Runtime),
            Self::Program { class, .. } => Some(*class),
        }
    }
}

/// Maps an interpreter error message to an error class by its exception name.
pub fn classify_error(message: &str) -> ErrorClass {
    if message.contains("SyntaxError") || message.contains("IndentationError") {
        ErrorClass::Parse
    } else if message.contains("NameError") || message.contains("AttributeError") {
        ErrorClass::UnknownFunction
    } else if message.contains("TypeError") {
        ErrorClass::Type
    } else if message.to_lowercase().contains("timeout") || message.contains("TimeoutError") {
        ErrorClass::Timeout
    } else {
        ErrorClass::Runtime
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &str) -> Result<Self, ExternalError> {
        let argv: Vec<&str> = command.split_whitespace().collect();
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| ExternalError::Unavailable("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| ExternalError::Unavailable(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A persistent worker process. A worker that times out or misbehaves is
/// killed and replaced on the next call.
pub struct ExternalExecutor {
    command: String,
    timeout: Duration,
    state: Mutex<(Option<Worker>, u64)>,
}

impl std::fmt::Debug for ExternalExecutor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalExecutor")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalExecutor {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        Self { command: command.into(), timeout, state: Mutex::new((None, 0)) }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn dispatch(&self, source: &str, bindings: &Bindings) -> Result<Verdict, ExternalError> {
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        state.1 += 1;
        let id = state.1;
        let mut worker = match state.0.take() {
            Some(w) => w,
            None => Worker::spawn(&self.command)?,
        };
        let timeout_ms = u64::try_from(self.timeout.as_millis()).unwrap_or(u64::MAX);
        let request = ExecRequest {
            id,
            source: source.to_string(),
            bindings: bindings.to_json(),
            timeout_ms,
        };
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');
        if let Err(e) = worker.stdin.write_all(line.as_bytes()).and_then(|_| worker.stdin.flush()) {
            worker.kill();
            return Err(ExternalError::Crashed(format!("cannot write request: {e}")));
        }
        let reply = match worker.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => {
                worker.kill();
                return Err(ExternalError::Crashed(format!("cannot read response: {e}")));
            }
            Err(RecvTimeoutError::Timeout) => {
                worker.kill();
                return Err(ExternalError::Timeout(timeout_ms));
            }
            Err(RecvTimeoutError::Disconnected) => {
                worker.kill();
                return Err(ExternalError::Crashed("worker closed its output".into()));
            }
        };
        let response: ExecResponse = match serde_json::from_str(&reply) {
            Ok(r) => r,
            Err(e) => {
                worker.kill();
                return Err(ExternalError::Protocol(format!("malformed response line: {e}")));
            }
        };
        if response.id != Some(id) {
            worker.kill();
            return Err(ExternalError::Protocol(format!(
                "response id {:?} does not match request id {id}",
                response.id
            )));
        }
        state.0 = Some(worker);
        match (response.status, response.verdict) {
            (ExecStatus::Ok, Some(verdict)) => {
                verdict
                    .validate()
                    .map_err(|e| ExternalError::Protocol(format!("invalid verdict: {e}")))?;
                Ok(verdict)
            }
            (ExecStatus::Ok, None) => Err(ExternalError::Protocol("ok response without a verdict".into())),
            (ExecStatus::Error, _) => {
                let message = response.error_message.unwrap_or_else(|| "unspecified error".into());
                Err(ExternalError::Program { class: classify_error(&message), message })
            }
        }
    }
}

impl Drop for ExternalExecutor {
    fn drop(&mut self) {
        let state = self.state.get_mut().unwrap_or_else(|p| p.into_inner());
        if let Some(w) = state.0.take() {
            w.kill();
        }
    }
}
