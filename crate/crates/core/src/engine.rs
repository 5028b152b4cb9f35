//! A long-lived guard engine holding policies, memory, the backend and the
//! program executor, shared by the service and the command line.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::GuardCase;
use crate::bridge::defaults::{agent_spec, guard_request, planning_instructions, seed_demonstrations, CODEGEN_PREAMBLE};
use crate::bridge::{BackendChoice, BackendError, CodegenInstructions, LlmBackend, PlanningInstructions};
use crate::evaluator::RunRecord;
use crate::gdsl::{guard, Engine, ExternalExecutor, GuardContext, GuardError, GuardOutcome, GuardReport, DEFAULT_TIMEOUT};
use crate::memory::{MemoryError, MemoryStore, NewEntry, RetrievalConfig, RetrievalOrder};
use crate::toolbox::{Policies, PolicyError, Registry};
use crate::types::{AgentIo, ExecStats, GuardRequest, RequestKind};

/// Demonstrations retrieved per case when no `k` is configured.
pub fn default_k(kind: RequestKind) -> usize {
    match kind {
        RequestKind::SafetyRules => 3,
        RequestKind::AccessControl | RequestKind::QaRules => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    #[serde(default)]
    pub engine: Engine,
    /// Overrides [`default_k`] for every kind.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub order: RetrievalOrder,
    /// Show demonstration programs in planning prompts too.
    #[serde(default)]
    pub include_program_in_plan: bool,
    #[serde(default = "default_debug")]
    pub max_debug_iterations: u32,
    /// Store every successfully guarded case as a new demonstration.
    #[serde(default)]
    pub auto_insert: bool,
    /// Worker threads for batch evaluation; 0 uses the rayon default.
    #[serde(default)]
    pub parallelism: usize,
}

fn default_debug() -> u32 {
    ExecStats::MAX_DEBUG_ITERATIONS
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            engine: Engine::InternalDsl,
            k: None,
            order: RetrievalOrder::MostSimilar,
            include_program_in_plan: false,
            max_debug_iterations: default_debug(),
            auto_insert: false,
            parallelism: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Guard(#[from] GuardError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("policy reference {policy_ref:?} does not name a loaded {kind} policy")]
    UnknownPolicy { kind: RequestKind, policy_ref: String },
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Everything needed to build a [`GuardEngine`] from files and flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settings {
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default = "canonical")]
    pub backend: BackendChoice,
    /// Permission table JSON; the bundled table when absent.
    #[serde(default)]
    pub permissions: Option<PathBuf>,
    /// Rule set JSON; the bundled rules when absent.
    #[serde(default)]
    pub rules: Option<PathBuf>,
    /// Memory JSONL; the bundled seed demonstrations when absent.
    #[serde(default)]
    pub memory: Option<PathBuf>,
    #[serde(default)]
    pub external_exec_cmd: Option<String>,
    #[serde(default = "default_external_timeout_ms")]
    pub external_timeout_ms: u64,
}

fn canonical() -> BackendChoice {
    BackendChoice::CanonicalSynthesizer
}

fn default_external_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT.as_millis() as u64
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            backend: canonical(),
            permissions: None,
            rules: None,
            memory: None,
            external_exec_cmd: None,
            external_timeout_ms: default_external_timeout_ms(),
        }
    }
}

impl Settings {
    pub fn build(&self) -> Result<GuardEngine, EngineError> {
        let policies = Policies::load(self.permissions.as_deref(), self.rules.as_deref())?;
        let memory = match &self.memory {
            Some(path) => MemoryStore::load(path)?,
            None => seeded_memory(&policies),
        };
        let backend = self.backend.build(&policies)?;
        let engine = GuardEngine::new(self.engine.clone(), policies, memory, backend)?;
        match (&self.external_exec_cmd, self.engine.engine) {
            (Some(cmd), _) => Ok(engine.with_external(ExternalExecutor::new(
                cmd.clone(),
                Duration::from_millis(self.external_timeout_ms),
            ))),
            (None, Engine::ExternalInterpreter) => {
                Err(EngineError::Config("the external engine needs an external exec command".into()))
            }
            (None, Engine::InternalDsl) => Ok(engine),
        }
    }
}

/// A memory store holding the bundled seed demonstrations of every kind.
pub fn seeded_memory(policies: &Policies) -> MemoryStore {
    let mut store = MemoryStore::new();
    for kind in RequestKind::ALL {
        for entry in seed_demonstrations(kind, policies) {
            store.insert(entry);
        }
    }
    store
}

/// One evaluated case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRun {
    pub record: RunRecord,
    pub outcome: GuardOutcome,
}

pub struct GuardEngine {
    config: EngineConfig,
    policies: Policies,
    registry: Registry,
    planning: PlanningInstructions,
    codegen: CodegenInstructions,
    memory: RwLock<MemoryStore>,
    backend: Arc<dyn LlmBackend>,
    external: Option<ExternalExecutor>,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for GuardEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GuardEngine")
            .field("config", &self.config)
            .field("backend", &self.backend.name())
            .finish_non_exhaustive()
    }
}

impl GuardEngine {
    pub fn new(
        config: EngineConfig,
        policies: Policies,
        memory: MemoryStore,
        backend: Arc<dyn LlmBackend>,
    ) -> Result<Self, EngineError> {
        if config.max_debug_iterations > ExecStats::MAX_DEBUG_ITERATIONS {
            return Err(EngineError::Config(format!(
                "max_debug_iterations must be at most {}",
                ExecStats::MAX_DEBUG_ITERATIONS
            )));
        }
        if config.k == Some(0) {
            return Err(EngineError::Config("k must be at least 1".into()));
        }
        let pool = if config.parallelism > 0 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.parallelism)
                    .build()
                    .map_err(|e| EngineError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        let registry = Registry::with_defaults();
        Ok(Self {
            codegen: CodegenInstructions::for_registry(CODEGEN_PREAMBLE, &registry),
            planning: planning_instructions(),
            registry,
            config,
            policies,
            memory: RwLock::new(memory),
            backend,
            external: None,
            pool,
        })
    }

    /// Program executor used when the configured engine is external.
    pub fn with_external(mut self, executor: ExternalExecutor) -> Self {
        self.external = Some(executor);
        self
    }

    pub fn with_planning(mut self, planning: PlanningInstructions) -> Self {
        self.planning = planning;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn policies(&self) -> &Policies {
        &self.policies
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn memory_snapshot(&self) -> MemoryStore {
        self.memory.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn insert_memory(&self, entry: NewEntry) -> u64 {
        self.memory.write().unwrap_or_else(|p| p.into_inner()).insert(entry)
    }

    pub fn request_for(&self, kind: RequestKind) -> GuardRequest {
        guard_request(kind, &self.policies)
    }

    /// Guards one agent log under the bundled request text for `kind`.
    pub fn guard_io(&self, kind: RequestKind, io: &AgentIo) -> Result<GuardReport, EngineError> {
        self.guard_request(&self.request_for(kind), io)
    }

    /// Guards one agent log under an explicit request. An annotated identity
    /// missing from the permission table is rejected before any prompt.
    pub fn guard_request(&self, request: &GuardRequest, io: &AgentIo) -> Result<GuardReport, EngineError> {
        self.policies.resolve(request.kind, &request.policy_ref).map_err(|_| EngineError::UnknownPolicy {
            kind: request.kind,
            policy_ref: request.policy_ref.clone(),
        })?;
        if request.kind == RequestKind::AccessControl {
            if let Some(role) = io.structured.as_ref().and_then(|s| s.identity.as_deref()) {
                if self.policies.permissions.role(role).is_none() {
                    return Err(PolicyError::UnknownRole(role.to_string()).into());
                }
            }
        }
        let k = self.config.k.unwrap_or_else(|| default_k(request.kind));
        let retrieval = RetrievalConfig::new(k)?.with_order(self.config.order);
        let retrieval = RetrievalConfig { include_program: self.config.include_program_in_plan, ..retrieval };
        let spec = agent_spec(request.kind);
        let report = {
            let memory = self.memory.read().unwrap_or_else(|p| p.into_inner());
            let ctx = GuardContext {
                spec: &spec,
                request,
                memory: &memory,
                retrieval,
                planning: &self.planning,
                codegen: &self.codegen,
                registry: &self.registry,
                policies: &self.policies,
                backend: self.backend.as_ref(),
                engine: self.config.engine,
                external: self.external.as_ref(),
                max_debug_iterations: self.config.max_debug_iterations,
            };
            guard(io, &ctx)?
        };
        if self.config.auto_insert && report.outcome.verdict().is_some() {
            self.insert_memory(NewEntry {
                agent_input: io.input_text.clone(),
                agent_output: io.output_log.clone(),
                plan: report.plan.clone(),
                program_source: report.program.source.clone(),
                benchmark_tag: request.kind.as_str().to_string(),
            });
        }
        Ok(report)
    }

    pub fn guard_case(&self, case: &GuardCase) -> Result<CaseRun, EngineError> {
        let report = self.guard_io(case.kind, &case.agent_io)?;
        Ok(CaseRun { record: RunRecord::from_outcome(case, &report.outcome), outcome: report.outcome })
    }

    /// Guards every case in parallel; results keep the input order. The
    /// first error aborts the batch.
    pub fn eval(&self, cases: &[GuardCase]) -> Result<Vec<CaseRun>, EngineError> {
        let started = Instant::now();
        let run = || cases.par_iter().map(|c| self.guard_case(c)).collect::<Result<Vec<_>, _>>();
        let runs = match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }?;
        tracing::info!(cases = cases.len(), elapsed_ms = started.elapsed().as_millis() as u64, "evaluation finished");
        Ok(runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{label_case, smoke_cases};
    use crate::bridge::canonical::CanonicalSynthesizer;
    use crate::bridge::ScriptedBackend;
    use crate::evaluator::score;

    fn engine(config: EngineConfig) -> GuardEngine {
        let policies = Policies::default();
        let memory = seeded_memory(&policies);
        GuardEngine::new(config, policies.clone(), memory, Arc::new(CanonicalSynthesizer::new(policies))).unwrap()
    }

    #[test]
    fn smoke_cases_are_perfect() {
        let e = engine(EngineConfig::default());
        let cases = smoke_cases();
        let runs = e.eval(&cases).unwrap();
        for (c, r) in cases.iter().zip(&runs) {
            let v = r.outcome.verdict().unwrap();
            assert_eq!((v.label, v.details.clone()), label_case(c, e.policies()).unwrap(), "{}", c.id);
        }
        let records: Vec<_> = runs.into_iter().map(|r| r.record).collect();
        let m = score(&records).unwrap();
        assert_eq!([m.lpa, m.lpp, m.lpr, m.ea, m.fra], [100.0; 5]);
    }

    struct Recording {
        inner: CanonicalSynthesizer,
        calls: std::sync::Mutex<Vec<String>>,
    }

    impl LlmBackend for Recording {
        fn complete(&self, prompt: &str) -> Result<String, crate::bridge::BackendError> {
            self.calls.lock().unwrap().push(prompt.to_string());
            self.inner.complete(prompt)
        }

        fn name(&self) -> &'static str {
            "recording"
        }
    }

    fn demos_in_plan_prompt(k: Option<usize>, kind: RequestKind) -> usize {
        let policies = Policies::default();
        let backend = Arc::new(Recording { inner: CanonicalSynthesizer::new(policies.clone()), calls: Default::default() });
        let e = GuardEngine::new(EngineConfig { k, ..Default::default() }, policies.clone(), seeded_memory(&policies), backend.clone())
            .unwrap();
        let case = smoke_cases().into_iter().find(|c| c.kind == kind).unwrap();
        e.guard_case(&case).unwrap();
        let calls = backend.calls.lock().unwrap();
        crate::bridge::section_headers(&calls[0]).iter().filter(|h| h.starts_with("### DEMONSTRATION")).count()
    }

    #[test]
    fn k_is_honored_in_prompts() {
        assert_eq!(demos_in_plan_prompt(None, RequestKind::SafetyRules), 3);
        assert_eq!(demos_in_plan_prompt(None, RequestKind::AccessControl), 1);
        assert_eq!(demos_in_plan_prompt(Some(3), RequestKind::AccessControl), 3);
        assert_eq!(demos_in_plan_prompt(Some(2), RequestKind::SafetyRules), 2);
    }

    #[test]
    fn auto_insert_grows_memory() {
        let e = engine(EngineConfig { auto_insert: true, ..Default::default() });
        let before = e.memory_snapshot().len();
        e.guard_case(&smoke_cases()[0]).unwrap();
        assert_eq!(e.memory_snapshot().len(), before + 1);
    }

    #[test]
    fn settings_build_engines() {
        let e = Settings::default().build().unwrap();
        assert_eq!(e.backend_name(), "canonical");
        assert_eq!(e.memory_snapshot(), seeded_memory(e.policies()));
        let external = Settings {
            engine: EngineConfig { engine: Engine::ExternalInterpreter, ..Default::default() },
            ..Default::default()
        };
        assert!(matches!(external.build(), Err(EngineError::Config(_))));
        let missing = Settings { memory: Some("/nonexistent/memory.jsonl".into()), ..Default::default() };
        assert!(matches!(missing.build(), Err(EngineError::Memory(_))));
        let missing = Settings { rules: Some("/nonexistent/rules.json".into()), ..Default::default() };
        assert!(matches!(missing.build(), Err(EngineError::Policy(_))));
        let parsed: Settings = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, Settings::default());
    }

    #[test]
    fn bad_config_and_policy() {
        let policies = Policies::default();
        let backend: Arc<dyn LlmBackend> = Arc::new(ScriptedBackend::default());
        let cfg = EngineConfig { max_debug_iterations: 4, ..Default::default() };
        assert!(GuardEngine::new(cfg, policies.clone(), MemoryStore::new(), backend.clone()).is_err());
        let e = GuardEngine::new(EngineConfig::default(), policies, MemoryStore::new(), backend).unwrap();
        let mut case = crate::bench::smoke_cases().remove(0);
        case.agent_io.structured.as_mut().unwrap().identity = Some("janitor".into());
        assert!(matches!(e.guard_case(&case), Err(EngineError::Policy(PolicyError::UnknownRole(_)))));
        let mut req = e.request_for(RequestKind::AccessControl);
        req.policy_ref = "nope".into();
        assert!(matches!(
            e.guard_request(&req, &smoke_cases()[0].agent_io),
            Err(EngineError::UnknownPolicy { .. })
        ));
    }

    #[test]
    fn empty_memory_is_an_error() {
        let policies = Policies::default();
        let e = GuardEngine::new(
            EngineConfig::default(),
            policies.clone(),
            MemoryStore::new(),
            Arc::new(CanonicalSynthesizer::new(policies)),
        )
        .unwrap();
        assert!(matches!(
            e.guard_case(&smoke_cases()[0]),
            Err(EngineError::Guard(GuardError::Memory(_)))
        ));
    }

    #[test]
    fn default_k_per_kind() {
        assert_eq!(default_k(RequestKind::AccessControl), 1);
        assert_eq!(default_k(RequestKind::SafetyRules), 3);
    }
}
