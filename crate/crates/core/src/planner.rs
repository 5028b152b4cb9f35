//! Four-step action plans: wire format, parsing and the planning call.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::bridge::{build_plan_prompt, BackendError, Demo, LlmBackend, PlanningInstructions};
use crate::types::{AgentIo, GuardRequest, TargetAgentSpec};

/// Words of which step 4 must contain at least one, so that it names how
/// the guardrail program is executed.
pub const ENGINE_KEYWORDS: [&str; 6] = ["interpreter", "engine", "gdsl", "python", "execute", "execution"];

pub const REASK_SUFFIX: &str = "### FORMAT REMINDER\nAnswer with exactly four lines starting with \"Step 1:\", \"Step 2:\", \"Step 3:\" and \"Step 4:\". Step 4 must name the engine that executes the guardrail program.\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct ActionPlan {
    pub steps: [String; 4],
    pub raw_text: String,
}

#[derive(Deserialize)]
struct RawPlan {
    steps: Vec<String>,
    #[serde(default)]
    raw_text: Option<String>,
}

impl TryFrom<RawPlan> for ActionPlan {
    type Error = PlanParseError;

    fn try_from(raw: RawPlan) -> Result<Self, Self::Error> {
        let count = raw.steps.len();
        let steps: [String; 4] = raw
            .steps
            .try_into()
            .map_err(|_| PlanParseError::StepCount { found: (1..=count as u32).collect() })?;
        let mut plan = ActionPlan::new(steps)?;
        if let Some(text) = raw.raw_text {
            plan.raw_text = text;
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanParseError {
    #[error("expected step markers 1, 2, 3, 4 in order, found {found:?}")]
    StepCount { found: Vec<u32> },
    #[error("step {0} is empty")]
    EmptyStep(usize),
    #[error("step 4 does not name an execution engine")]
    NoEngine,
}

impl ActionPlan {
    /// Builds a plan from four steps; `raw_text` is the canonical rendering.
    pub fn new(steps: [String; 4]) -> Result<Self, PlanParseError> {
        let steps = steps.map(|s| s.trim().to_string());
        if let Some(i) = steps.iter().position(String::is_empty) {
            return Err(PlanParseError::EmptyStep(i + 1));
        }
        let p4 = steps[3].to_lowercase();
        if !ENGINE_KEYWORDS.iter().any(|k| p4.contains(k)) {
            return Err(PlanParseError::NoEngine);
        }
        let mut plan = Self { steps, raw_text: String::new() };
        plan.raw_text = plan.render();
        Ok(plan)
    }

    /// Canonical wire format: one `Step N: ...` line per step.
    pub fn render(&self) -> String {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("Step {}: {}\n", i + 1, s))
            .collect()
    }
}

impl fmt::Display for ActionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t]*(?:(?:[-*>#]+|\d+[.)])[ \t]*)*\**step[ \t]*(\d+)[ \t]*\**[ \t]*[:.)]\**")
            .expect("valid regex")
    })
}

/// Extracts the four steps from `Step N:` markers at line starts. Markers are
/// matched case-insensitively and may be preceded by list punctuation or
/// markdown emphasis.
pub fn parse_plan(text: &str) -> Result<ActionPlan, PlanParseError> {
    let markers: Vec<(u32, usize, usize)> = marker_regex()
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).expect("match");
            (c[1].parse().unwrap_or(0), whole.start(), whole.end())
        })
        .collect();
    let found: Vec<u32> = markers.iter().map(|m| m.0).collect();
    if found != [1, 2, 3, 4] {
        return Err(PlanParseError::StepCount { found });
    }
    let mut steps: [String; 4] = Default::default();
    for (i, (_, _, body_start)) in markers.iter().enumerate() {
        let body_end = markers.get(i + 1).map_or(text.len(), |m| m.1);
        steps[i] = text[*body_start..body_end].trim().trim_end_matches("**").trim().to_string();
    }
    let mut plan = ActionPlan::new(steps)?;
    plan.raw_text = text.to_string();
    Ok(plan)
}

#[derive(Debug, thiserror::Error)]
pub enum PlanningError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("could not parse an action plan after one re-ask: {error}")]
    Unparseable { error: PlanParseError, raw_text: String },
}

/// Asks the backend for a plan, re-asking once with a format reminder when
/// the first answer does not parse.
pub fn plan(
    instructions: &PlanningInstructions,
    spec: &TargetAgentSpec,
    req: &GuardRequest,
    demos: &[Demo<'_>],
    io: &AgentIo,
    backend: &dyn LlmBackend,
) -> Result<ActionPlan, PlanningError> {
    let prompt = build_plan_prompt(instructions, spec, req, demos, io);
    let first = backend.complete(&prompt)?;
    if let Ok(p) = parse_plan(&first) {
        return Ok(p);
    }
    let second = backend.complete(&format!("{prompt}\n{REASK_SUFFIX}"))?;
    parse_plan(&second).map_err(|error| PlanningError::Unparseable { error, raw_text: second })
}
