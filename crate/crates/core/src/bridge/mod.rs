//! Prompt assembly for planning, code generation, debugging and the
//! prompt-only baselines, and the backends that complete prompts.
//!
//! Every prompt is a sequence of sections introduced by fixed `### `
//! headers; demonstration fields use `#### ` sub-headers. Builders are pure:
//! identical inputs give byte-identical prompts.

pub mod backend;
pub mod canonical;
pub mod defaults;

use serde::{Deserialize, Serialize};

pub use backend::{fingerprint, BackendChoice, BackendError, HttpChatBackend, HttpConfig, LlmBackend, ScriptedBackend};
pub use canonical::CanonicalSynthesizer;

use crate::memory::MemoryEntry;
use crate::planner::ActionPlan;
use crate::toolbox::Registry;
use crate::types::{AgentIo, GuardRequest, RequestKind, TargetAgentSpec};

pub const H_PLANNING: &str = "### PLANNING INSTRUCTIONS";
pub const H_CODEGEN: &str = "### CODE GENERATION INSTRUCTIONS";
pub const H_DEBUG: &str = "### DEBUG INSTRUCTIONS";
pub const H_BASELINE: &str = "### GUARDRAIL INSTRUCTIONS";
pub const H_SPEC: &str = "### TARGET AGENT SPECIFICATION";
pub const H_REQUESTS: &str = "### GUARD REQUESTS";
pub const H_INPUT: &str = "### AGENT INPUT";
pub const H_OUTPUT: &str = "### AGENT OUTPUT";
pub const H_PLAN: &str = "### ACTION PLAN";
pub const H_FAILING: &str = "### FAILING PROGRAM";
pub const H_ERROR: &str = "### ERROR MESSAGE";
pub const H_FACTS: &str = "#### CASE FACTS";

pub const USE_ONLY_PROVIDED: &str =
    "Use only the provided functions listed below; calls to any other function are rejected before the program runs.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningInstructions {
    pub text: String,
}

impl PlanningInstructions {
    pub fn new(text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PromptError::EmptyInstructions);
        }
        Ok(Self { text })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodegenInstructions {
    pub preamble: String,
    pub function_signatures: Vec<String>,
}

impl CodegenInstructions {
    /// Instructions listing the signatures of every function in `registry`.
    pub fn for_registry(preamble: impl Into<String>, registry: &Registry) -> Self {
        Self { preamble: preamble.into(), function_signatures: registry.signatures() }
    }
}

/// A code-free demonstration for the prompt-only baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineDemo {
    pub agent_input: String,
    pub agent_output: String,
    pub reasoning: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselinePromptConfig {
    pub instructions: String,
    pub demos: Vec<BaselineDemo>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("instructions must not be empty")]
    EmptyInstructions,
    #[error("the debug prompt needs a nonempty error message")]
    EmptyErrorMessage,
}

/// A retrieved demonstration as shown in a prompt. `program` is omitted in
/// planning prompts unless explicitly requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Demo<'a> {
    pub agent_input: &'a str,
    pub agent_output: &'a str,
    pub plan: &'a ActionPlan,
    pub program: Option<&'a str>,
}

impl<'a> Demo<'a> {
    pub fn from_entry(entry: &'a MemoryEntry, include_program: bool) -> Self {
        Self {
            agent_input: &entry.agent_input,
            agent_output: &entry.agent_output,
            plan: &entry.plan,
            program: include_program.then_some(entry.program_source.as_str()),
        }
    }
}

fn section(out: &mut String, header: &str, body: &str) {
    out.push_str(header);
    out.push('\n');
    out.push_str(body.trim_end());
    out.push_str("\n\n");
}

fn push_demos(out: &mut String, demos: &[Demo<'_>]) {
    for (i, d) in demos.iter().enumerate() {
        out.push_str(&format!("### DEMONSTRATION {}\n", i + 1));
        section(out, "#### AGENT INPUT", d.agent_input);
        section(out, "#### AGENT OUTPUT", d.agent_output);
        section(out, "#### ACTION PLAN", &d.plan.render());
        if let Some(p) = d.program {
            section(out, "#### GUARDRAIL PROGRAM", p);
        }
    }
}

/// Agent input section, followed by the structured facts when the case has
/// them, then the agent output section.
fn push_case(out: &mut String, io: &AgentIo) {
    section(out, H_INPUT, &io.input_text);
    if let Some(facts) = &io.structured {
        section(out, H_FACTS, &serde_json::to_string(facts).expect("facts serialize"));
    }
    section(out, H_OUTPUT, &io.output_log);
}

fn spec_body(spec: &TargetAgentSpec) -> String {
    let mut body = format!("name: {}\n{}", spec.name, spec.description.trim_end());
    if !spec.io_format_notes.trim().is_empty() {
        body.push_str("\n\n");
        body.push_str(spec.io_format_notes.trim_end());
    }
    body
}

/// Sections: planning instructions, agent specification, guard requests,
/// demonstrations, agent input, agent output.
pub fn build_plan_prompt(
    ip: &PlanningInstructions,
    spec: &TargetAgentSpec,
    req: &GuardRequest,
    demos: &[Demo<'_>],
    io: &AgentIo,
) -> String {
    let mut out = String::new();
    section(&mut out, H_PLANNING, &ip.text);
    section(&mut out, H_SPEC, &spec_body(spec));
    section(&mut out, H_REQUESTS, &req.text);
    push_demos(&mut out, demos);
    push_case(&mut out, io);
    out
}

/// Sections: code generation instructions with the function list,
/// demonstrations (with programs), agent input, agent output, action plan.
pub fn build_code_prompt(ic: &CodegenInstructions, demos: &[Demo<'_>], io: &AgentIo, plan: &ActionPlan) -> String {
    let mut body = ic.preamble.trim_end().to_string();
    body.push_str("\n\n");
    body.push_str(USE_ONLY_PROVIDED);
    body.push_str("\n\nProvided functions:\n");
    for sig in &ic.function_signatures {
        body.push_str(&format!("- {sig}\n"));
    }
    let mut out = String::new();
    section(&mut out, H_CODEGEN, &body);
    push_demos(&mut out, demos);
    push_case(&mut out, io);
    section(&mut out, H_PLAN, &plan.render());
    out
}

pub fn build_debug_prompt(program_source: &str, error_message: &str) -> Result<String, PromptError> {
    if error_message.trim().is_empty() {
        return Err(PromptError::EmptyErrorMessage);
    }
    let mut out = String::new();
    section(
        &mut out,
        H_DEBUG,
        "The guardrail program below failed to parse, validate or run. Read the error message, \
         find the cause, and reply with the complete corrected program source only, without \
         explanations.",
    );
    section(&mut out, H_FAILING, program_source);
    section(&mut out, H_ERROR, error_message);
    Ok(out)
}

/// Sections: baseline instructions, agent specification, guard requests,
/// code-free demonstrations, agent input, agent output.
pub fn build_baseline_prompt(
    cfg: &BaselinePromptConfig,
    spec: &TargetAgentSpec,
    req: &GuardRequest,
    io: &AgentIo,
) -> String {
    let mut out = String::new();
    section(&mut out, H_BASELINE, &cfg.instructions);
    section(&mut out, H_SPEC, &spec_body(spec));
    section(&mut out, H_REQUESTS, &req.text);
    for (i, d) in cfg.demos.iter().enumerate() {
        out.push_str(&format!("### DEMONSTRATION {}\n", i + 1));
        section(&mut out, "#### AGENT INPUT", &d.agent_input);
        section(&mut out, "#### AGENT OUTPUT", &d.agent_output);
        section(&mut out, "#### REASONING", &d.reasoning);
        section(&mut out, "#### GUARDRAIL OUTPUT", &d.answer);
    }
    section(&mut out, H_INPUT, &io.input_text);
    section(&mut out, H_OUTPUT, &io.output_log);
    out
}

/// The target agent's own system prompt with the guard request embedded, for
/// the baseline that enforces policies inside the agent itself.
pub fn build_hardcoded_rules_prompt(agent_system_prompt: &str, req: &GuardRequest) -> String {
    let mut out = agent_system_prompt.trim_end().to_string();
    out.push_str("\n\n### POLICY\n");
    if !req.text.trim().is_empty() {
        out.push_str(req.text.trim_end());
        out.push_str("\n\n");
    }
    let denial = req.kind.denial_text();
    out.push_str(&format!(
        "Before answering, check the request against the policy above. If the policy is violated, \
         reply with \"{denial}\" on the first line, list the reasons on the following lines, and \
         do not carry out the request. Otherwise answer as usual.\n"
    ));
    out
}

/// Top-level `### ` section headers of a prompt, in order.
pub fn section_headers(prompt: &str) -> Vec<&str> {
    prompt.lines().filter(|l| l.starts_with("### ")).collect()
}

/// The request kind a program source targets, judged by the toolbox
/// functions it calls.
pub fn kind_of_source(source: &str) -> Option<RequestKind> {
    if source.contains("check_access") {
        Some(RequestKind::AccessControl)
    } else if source.contains("check_rules") {
        Some(RequestKind::SafetyRules)
    } else if source.contains("evaluate_qa_rules") {
        Some(RequestKind::QaRules)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ResourceSet, StructuredIo};

    fn fixture() -> (PlanningInstructions, TargetAgentSpec, GuardRequest, AgentIo, ActionPlan) {
        let ip = PlanningInstructions::new("Plan in four steps.").unwrap();
        let spec = TargetAgentSpec {
            name: "agent".into(),
            description: "answers questions".into(),
            io_format_notes: String::new(),
        };
        let req = GuardRequest { kind: RequestKind::AccessControl, text: "only allowed columns".into(), policy_ref: "permissions".into() };
        let io = AgentIo::new("who am i", "SELECT 1");
        let plan = ActionPlan::new(["a".into(), "b".into(), "c".into(), "execute".into()]).unwrap();
        (ip, spec, req, io, plan)
    }

    #[test]
    fn plan_prompt_without_demos_has_five_sections() {
        let (ip, spec, req, io, _) = fixture();
        let p = build_plan_prompt(&ip, &spec, &req, &[], &io);
        assert_eq!(section_headers(&p), [H_PLANNING, H_SPEC, H_REQUESTS, H_INPUT, H_OUTPUT]);
        assert_eq!(p, build_plan_prompt(&ip, &spec, &req, &[], &io));
    }

    #[test]
    fn demos_sit_between_requests_and_input() {
        let (ip, spec, req, io, plan) = fixture();
        let demos = [
            Demo { agent_input: "first", agent_output: "o1", plan: &plan, program: None },
            Demo { agent_input: "second", agent_output: "o2", plan: &plan, program: None },
        ];
        let p = build_plan_prompt(&ip, &spec, &req, &demos, &io);
        assert_eq!(
            section_headers(&p),
            [H_PLANNING, H_SPEC, H_REQUESTS, "### DEMONSTRATION 1", "### DEMONSTRATION 2", H_INPUT, H_OUTPUT]
        );
        assert!(p.find("first").unwrap() < p.find("second").unwrap());
        assert!(!p.contains("#### GUARDRAIL PROGRAM"));
    }

    #[test]
    fn code_prompt_lists_registry_and_programs() {
        let (_, _, _, io, plan) = fixture();
        let reg = Registry::with_defaults().without(&["evaluate_qa_rules", "risk_level", "len"]);
        let ic = CodegenInstructions::for_registry("Write a program.", &reg);
        let demos = [Demo { agent_input: "i", agent_output: "o", plan: &plan, program: Some("verdict grant") }];
        let p = build_code_prompt(&ic, &demos, &io, &plan);
        assert!(p.contains(USE_ONLY_PROVIDED));
        assert_eq!(p.matches("\n- ").count(), 2);
        assert!(p.contains("#### GUARDRAIL PROGRAM\nverdict grant"));
        assert_eq!(
            section_headers(&p),
            [H_CODEGEN, "### DEMONSTRATION 1", H_INPUT, H_OUTPUT, H_PLAN]
        );
    }

    #[test]
    fn case_facts_follow_input() {
        let (ip, spec, req, mut io, _) = fixture();
        io.structured = Some(StructuredIo {
            identity: Some("physician".into()),
            required_resources: Some(ResourceSet::from_pairs([("lab", "labname")])),
            query: "q".into(),
            ..Default::default()
        });
        let p = build_plan_prompt(&ip, &spec, &req, &[], &io);
        assert!(p.contains("### AGENT INPUT\nwho am i\n\n#### CASE FACTS\n{\"identity\":\"physician\""));
        assert_eq!(section_headers(&p).len(), 5);
    }

    #[test]
    fn debug_prompt_embeds_source_and_error() {
        let p = build_debug_prompt("let x = Foo();", "unknown function Foo").unwrap();
        assert!(p.contains("let x = Foo();"));
        assert!(p.contains("unknown function Foo"));
        assert_eq!(build_debug_prompt("x", "  ").unwrap_err(), PromptError::EmptyErrorMessage);
    }

    #[test]
    fn baseline_order() {
        let (_, spec, req, io, _) = fixture();
        let cfg = BaselinePromptConfig {
            instructions: "Decide.".into(),
            demos: vec![BaselineDemo {
                agent_input: "i".into(),
                agent_output: "o".into(),
                reasoning: "r".into(),
                answer: "access denied".into(),
            }],
        };
        let p = build_baseline_prompt(&cfg, &spec, &req, &io);
        assert_eq!(
            section_headers(&p),
            [H_BASELINE, H_SPEC, H_REQUESTS, "### DEMONSTRATION 1", H_INPUT, H_OUTPUT]
        );
        let empty = BaselinePromptConfig { instructions: "Decide.".into(), demos: vec![] };
        assert_eq!(section_headers(&build_baseline_prompt(&empty, &spec, &req, &io)).len(), 5);
    }

    #[test]
    fn hardcoded_prompt_appends_policy() {
        let req = GuardRequest { kind: RequestKind::SafetyRules, text: String::new(), policy_ref: "rules".into() };
        let p = build_hardcoded_rules_prompt("You are a web agent.", &req);
        assert!(p.starts_with("You are a web agent.\n\n### POLICY\n"));
        assert!(p.contains("\"action denied\""));
    }

    #[test]
    fn source_kind() {
        assert_eq!(kind_of_source("let r = check_rules(a, b, c);"), Some(RequestKind::SafetyRules));
        assert_eq!(kind_of_source("verdict grant"), None);
    }
}
