//! Runs guard work in process, or against a service given by `--server`.

use anyhow::Context;
use tokio::runtime::Runtime;

use warden_client::{ClientError, GuardClient};
use warden_core::api::{EvalReply, GuardBody, GuardReply, ScoreReport, CODE_GUARD_FAILURE};
use warden_core::bench::GuardCase;
use warden_core::evaluator::{RunRecord, ScoreOptions};
use warden_core::gdsl::GuardOutcome;
use warden_core::memory::{MemoryEntry, MemoryStore, NewEntry};
use warden_core::types::{render_verdict, ExecStats};
use warden_core::{GuardEngine, Settings};

pub enum GuardResult {
    Verdict(GuardReply),
    Failure { message: String, exec_stats: Option<ExecStats> },
}

pub enum Runner {
    Local(Box<GuardEngine>),
    Remote { client: GuardClient, rt: Runtime },
}

pub fn runtime() -> anyhow::Result<Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().context("cannot start the async runtime")
}

impl Runner {
    pub fn new(settings: &Settings, server: Option<&str>) -> anyhow::Result<Self> {
        match server {
            Some(url) => Ok(Self::Remote { client: GuardClient::new(url)?, rt: runtime()? }),
            None => Ok(Self::Local(Box::new(settings.build()?))),
        }
    }

    pub fn guard(&self, body: &GuardBody) -> anyhow::Result<GuardResult> {
        match self {
            Self::Local(engine) => {
                let request = body.request(engine.request_for(body.kind));
                let report = engine.guard_request(&request, &body.agent_io)?;
                Ok(match report.outcome {
                    GuardOutcome::Verdict(verdict) => GuardResult::Verdict(GuardReply {
                        rendered: render_verdict(&verdict, body.kind),
                        verdict,
                        program: report.program.source,
                    }),
                    GuardOutcome::Failure { exec_stats, message } => {
                        GuardResult::Failure { message, exec_stats: Some(exec_stats) }
                    }
                })
            }
            Self::Remote { client, rt } => match rt.block_on(client.guard(body)) {
                Ok(reply) => Ok(GuardResult::Verdict(reply)),
                Err(ClientError::Api { body, .. }) if body.code == CODE_GUARD_FAILURE => {
                    Ok(GuardResult::Failure { message: body.message, exec_stats: body.exec_stats })
                }
                Err(e) => Err(e.into()),
            },
        }
    }

    pub fn eval(&self, cases: Vec<GuardCase>, options: ScoreOptions) -> anyhow::Result<EvalReply> {
        match self {
            Self::Local(engine) => Ok(EvalReply::from_runs(engine.eval(&cases)?, options)?),
            Self::Remote { client, rt } => Ok(rt.block_on(client.eval(cases, options))?),
        }
    }

    pub fn score(&self, records: Vec<RunRecord>, options: ScoreOptions) -> anyhow::Result<ScoreReport> {
        match self {
            Self::Local(_) => Ok(ScoreReport::from_records(&records, options)?),
            Self::Remote { client, rt } => Ok(rt.block_on(client.score(records, options))?),
        }
    }

    pub fn memory(&self) -> anyhow::Result<Vec<MemoryEntry>> {
        match self {
            Self::Local(engine) => Ok(engine.memory_snapshot().entries().to_vec()),
            Self::Remote { client, rt } => Ok(rt.block_on(client.memory())?.entries),
        }
    }

    /// Adds a demonstration to the service. Local additions go through the
    /// memory file instead; see [`add_to_file`].
    pub fn add_remote(&self, entry: &NewEntry) -> anyhow::Result<Option<u64>> {
        match self {
            Self::Local(_) => Ok(None),
            Self::Remote { client, rt } => Ok(Some(rt.block_on(client.add_memory(entry))?)),
        }
    }
}

/// Appends a demonstration to a memory file, creating it when missing.
pub fn add_to_file(path: &std::path::Path, entry: NewEntry) -> anyhow::Result<u64> {
    let mut store = MemoryStore::load_or_empty(path)?;
    let id = store.insert(entry);
    store.save(path)?;
    Ok(id)
}
