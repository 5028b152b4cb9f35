//! The end-to-end guard: plan, generate a program, run it, and repair it
//! with the model's help when it fails.

use serde::{Deserialize, Serialize};

use super::bindings::Bindings;
use super::external::{ExternalError, ExternalExecutor};
use super::interp::execute;
use super::{extract_source, Engine, GuardrailProgram};
use crate::bridge::{
    build_code_prompt, build_debug_prompt, BackendError, CodegenInstructions, Demo, LlmBackend, PlanningInstructions,
};
use crate::memory::{MemoryError, MemoryStore, RetrievalConfig};
use crate::planner::{plan, ActionPlan, PlanningError};
use crate::toolbox::{Policies, Registry};
use crate::types::{AgentIo, ErrorClass, ExecStats, GuardRequest, TargetAgentSpec, Verdict};

/// Everything a guard run needs besides the case itself.
pub struct GuardContext<'a> {
    pub spec: &'a TargetAgentSpec,
    pub request: &'a GuardRequest,
    pub memory: &'a MemoryStore,
    pub retrieval: RetrievalConfig,
    pub planning: &'a PlanningInstructions,
    pub codegen: &'a CodegenInstructions,
    pub registry: &'a Registry,
    pub policies: &'a Policies,
    pub backend: &'a dyn LlmBackend,
    pub engine: Engine,
    pub external: Option<&'a ExternalExecutor>,
    pub max_debug_iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GuardOutcome {
    Verdict(Verdict),
    /// No program ran within the debug cap; the case is neither granted nor
    /// denied.
    Failure { exec_stats: ExecStats, message: String },
}

impl GuardOutcome {
    pub fn exec_stats(&self) -> ExecStats {
        match self {
            Self::Verdict(v) => v.exec_stats,
            Self::Failure { exec_stats, .. } => *exec_stats,
        }
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        match self {
            Self::Verdict(v) => Some(v),
            Self::Failure { .. } => None,
        }
    }
}

/// One program attempt and, when it failed, why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardReport {
    pub outcome: GuardOutcome,
    pub plan: ActionPlan,
    pub program: GuardrailProgram,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, thiserror::Error)]
pub enum GuardError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    EngineUnavailable(ExternalError),
    #[error("invalid guard configuration: {0}")]
    Config(String),
}

enum RunFailure {
    Program { class: ErrorClass, message: String },
    Unavailable(ExternalError),
}

fn run_program(source: &str, io: &AgentIo, ctx: &GuardContext<'_>) -> Result<(Verdict, GuardrailProgram), RunFailure> {
    let bindings = Bindings::for_case(io, ctx.request.kind, ctx.policies);
    match ctx.engine {
        Engine::InternalDsl => {
            let program = GuardrailProgram::compile(source, ctx.registry)
                .map_err(|e| RunFailure::Program { class: e.class(), message: e.to_string() })?;
            let ast = program.ast.as_ref().expect("compiled programs carry an ast");
            let verdict = execute(ast, ctx.registry, &bindings)
                .map_err(|e| RunFailure::Program { class: e.class, message: e.to_string() })?;
            Ok((verdict, program))
        }
        Engine::ExternalInterpreter => {
            let program = GuardrailProgram::external(source);
            let exec = ctx.external.expect("checked by guard");
            let verdict = exec.dispatch(source, &bindings).map_err(|e| match e.class() {
                None => RunFailure::Unavailable(e),
                Some(class) => RunFailure::Program { class, message: e.to_string() },
            })?;
            Ok((verdict, program))
        }
    }
}

/// Runs the full guard on one case.
///
/// Backend, memory and planning failures are errors. A program that still
/// fails after the debug budget is spent yields [`GuardOutcome::Failure`].
pub fn guard(io: &AgentIo, ctx: &GuardContext<'_>) -> Result<GuardReport, GuardError> {
    if ctx.max_debug_iterations > ExecStats::MAX_DEBUG_ITERATIONS {
        return Err(GuardError::Config(format!(
            "at most {} debug iterations are allowed, got {}",
            ExecStats::MAX_DEBUG_ITERATIONS,
            ctx.max_debug_iterations
        )));
    }
    if ctx.engine == Engine::ExternalInterpreter && ctx.external.is_none() {
        return Err(GuardError::EngineUnavailable(ExternalError::Unavailable(
            "no external interpreter command configured".into(),
        )));
    }

    let tag = ctx.request.kind.as_str();
    let entries = ctx.memory.retrieve_tagged(tag, &io.input_text, &io.output_log, &ctx.retrieval)?;
    let plan_demos: Vec<Demo<'_>> =
        entries.iter().map(|e| Demo::from_entry(e, ctx.retrieval.include_program)).collect();
    let action_plan = plan(ctx.planning, ctx.spec, ctx.request, &plan_demos, io, ctx.backend)?;

    let code_demos: Vec<Demo<'_>> = entries.iter().map(|e| Demo::from_entry(e, true)).collect();
    let code_prompt = build_code_prompt(ctx.codegen, &code_demos, io, &action_plan);
    let mut source = extract_source(&ctx.backend.complete(&code_prompt)?);

    let mut attempts = Vec::new();
    let mut first_class = None;
    let mut used = 0;
    loop {
        match run_program(&source, io, ctx) {
            Ok((verdict, program)) => {
                attempts.push(Attempt { source, error: None });
                let stats = ExecStats {
                    executable_before_debug: used == 0,
                    debug_iterations_used: used,
                    executable_after_debug: true,
                    error_class: first_class,
                };
                return Ok(GuardReport {
                    outcome: GuardOutcome::Verdict(verdict.with_stats(stats)),
                    plan: action_plan,
                    program,
                    attempts,
                });
            }
            Err(RunFailure::Unavailable(e)) => return Err(GuardError::EngineUnavailable(e)),
            Err(RunFailure::Program { class, message }) => {
                first_class.get_or_insert(class);
                attempts.push(Attempt { source: source.clone(), error: Some(message.clone()) });
                if used == ctx.max_debug_iterations {
                    let stats = ExecStats {
                        executable_before_debug: false,
                        debug_iterations_used: used,
                        executable_after_debug: false,
                        error_class: first_class,
                    };
                    let program = match ctx.engine {
                        Engine::InternalDsl => GuardrailProgram {
                            source: source.clone(),
                            ast: None,
                            target_engine: Engine::InternalDsl,
                        },
                        Engine::ExternalInterpreter => GuardrailProgram::external(&source),
                    };
                    return Ok(GuardReport {
                        outcome: GuardOutcome::Failure { exec_stats: stats, message },
                        plan: action_plan,
                        program,
                        attempts,
                    });
                }
                used += 1;
                let prompt = build_debug_prompt(&source, &message).expect("failure messages are nonempty");
                source = extract_source(&ctx.backend.complete(&prompt)?);
            }
        }
    }
}
