use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use warden_core::bridge::{BackendChoice, HttpConfig};
use warden_core::gdsl::Engine;
use warden_core::memory::RetrievalOrder;
use warden_core::{EngineConfig, RequestKind, Settings};

#[derive(Debug, Parser)]
#[command(name = "warden", version, about = "Guardrails for LLM agents")]
pub struct Cli {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Send guard, eval, score and memory requests to a running service.
    #[arg(long, global = true, value_name = "URL")]
    pub server: Option<String>,
    /// Seed for the synthetic generators and the balancer.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Log to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Canonical,
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Access,
    Rules,
    Qa,
}

impl From<KindArg> for RequestKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Access => RequestKind::AccessControl,
            KindArg::Rules => RequestKind::SafetyRules,
            KindArg::Qa => RequestKind::QaRules,
        }
    }
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::Canonical)]
    pub backend: BackendArg,
    /// Scripted backend fixtures: a JSON object of prompt fingerprints to
    /// responses, or a JSON array of responses served in order.
    #[arg(long, global = true, value_name = "PATH")]
    pub fixtures: Option<PathBuf>,
    #[arg(long, global = true, default_value = "https://api.openai.com/v1")]
    pub llm_base_url: String,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,
    /// Cap on concurrent requests to the model endpoint.
    #[arg(long, global = true, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Demonstrations per case; defaults to 1 for access control and QA, 3
    /// for safety rules.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, default_value = "most-similar")]
    pub order: RetrievalOrder,
    #[arg(long, global = true, default_value = "dsl")]
    pub engine: Engine,
    /// Launch command of the external interpreter worker.
    #[arg(long, global = true, value_name = "CMD")]
    pub external_exec_cmd: Option<String>,
    #[arg(long, global = true, default_value_t = 10_000)]
    pub external_timeout_ms: u64,
    #[arg(long, global = true, default_value_t = 3)]
    pub max_debug_iters: u32,
    #[arg(long, global = true, value_name = "PATH")]
    pub permissions: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub rules: Option<PathBuf>,
    /// Memory JSONL; the bundled seed demonstrations when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub memory: Option<PathBuf>,
    /// Show demonstration programs in planning prompts.
    #[arg(long, global = true)]
    pub include_program_in_plan: bool,
    /// Keep every guarded case as a new demonstration (in memory only).
    #[arg(long, global = true)]
    pub auto_insert: bool,
    /// Batch evaluation workers; 0 uses one per CPU.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
}

impl EngineArgs {
    pub fn settings(&self) -> anyhow::Result<Settings> {
        let backend = match self.backend {
            BackendArg::Canonical => BackendChoice::CanonicalSynthesizer,
            BackendArg::Scripted => BackendChoice::Scripted {
                fixtures: self
                    .fixtures
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("--backend scripted needs --fixtures"))?,
            },
            BackendArg::Http => {
                let model = self
                    .llm_model
                    .clone()
                    .ok_or_else(|| anyhow::anyhow!("--backend http needs --llm-model"))?;
                BackendChoice::HttpChat(HttpConfig {
                    max_in_flight: self.max_in_flight,
                    ..HttpConfig::new(self.llm_base_url.clone(), model)
                })
            }
        };
        Ok(Settings {
            engine: EngineConfig {
                engine: self.engine,
                k: self.k,
                order: self.order,
                include_program_in_plan: self.include_program_in_plan,
                max_debug_iterations: self.max_debug_iters,
                auto_insert: self.auto_insert,
                parallelism: self.workers,
            },
            backend,
            permissions: self.permissions.clone(),
            rules: self.rules.clone(),
            memory: self.memory.clone(),
            external_exec_cmd: self.external_exec_cmd.clone(),
            external_timeout_ms: self.external_timeout_ms,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Guard one case and print the verdict. Exit 0 grant, 1 deny, 2 guard
    /// failure.
    Guard(GuardArgs),
    /// Batch evaluation and scoring.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Inspect and extend the demonstration memory.
    #[command(subcommand)]
    Memory(MemoryCmd),
    /// Build, inspect, validate and balance case files.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Run the HTTP guard service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GuardArgs {
    /// Case file: one JSON case, or JSONL with --id choosing the case.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["kind", "input"])]
    pub case: Option<PathBuf>,
    #[arg(long, requires = "case")]
    pub id: Option<String>,
    #[arg(long, value_enum, requires = "input")]
    pub kind: Option<KindArg>,
    /// Agent input text.
    #[arg(long, requires = "kind")]
    pub input: Option<String>,
    /// Agent output log.
    #[arg(long, default_value = "")]
    pub output: String,
    /// Structured case facts as JSON.
    #[arg(long, value_name = "JSON")]
    pub facts: Option<String>,
    /// Print only the JSON result.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Guard every case of a dataset and score the run.
    Run {
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        /// Require every case to be of this kind.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Directory for records.jsonl and metrics.json.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Count explanations that include extra detail items as accurate.
        #[arg(long)]
        ea_allow_extras: bool,
    },
    /// Score a records.jsonl file from an earlier run.
    Score {
        #[arg(long, value_name = "PATH")]
        records: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[arg(long)]
        ea_allow_extras: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum MemoryCmd {
    /// List stored demonstrations.
    List {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Print entries as JSONL.
        #[arg(long)]
        json: bool,
    },
    /// Append one demonstration to the --memory file, or to the service.
    Add {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        input: String,
        #[arg(long, default_value = "")]
        output: String,
        /// File holding the four-step action plan.
        #[arg(long, value_name = "PATH")]
        plan: PathBuf,
        /// File holding the guardrail program.
        #[arg(long, value_name = "PATH")]
        program: PathBuf,
    },
    /// Write the bundled seed demonstrations to the --memory file.
    Seed {
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    /// 316 access-control cases.
    EicuAc,
    /// 200 balanced safety-rules cases.
    Mind2webSc,
    /// The imbalanced safety-rules pool before balancing.
    Mind2webRaw,
    /// Six hand-labeled cases of every kind.
    Smoke,
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Generate a synthetic suite under --seed.
    Build {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Label counts per class and group.
    Stats {
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check schema, facts and that every label matches the policies.
    Validate {
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
    },
    /// Balance a safety-rules pool to an equal number of cases per class.
    Balance {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[arg(long, default_value_t = warden_core::bench::BALANCE_TARGET)]
        target: usize,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}
