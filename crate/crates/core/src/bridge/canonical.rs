//! A deterministic stand-in for a perfect model: reads the structured case
//! facts embedded in a prompt and answers with the correct plan or program.

use super::backend::{BackendError, LlmBackend};
use super::{kind_of_source, H_CODEGEN, H_DEBUG, H_FACTS, H_PLANNING};
use crate::planner::ActionPlan;
use crate::toolbox::{PermissionTable, Policies};
use crate::types::{RequestKind, StructuredIo};

pub const ACCESS_PROGRAM: &str = "\
let r = check_access(role, required, permissions);
if r.denied {
    verdict deny(\"access denied\", r.inaccessible)
} else {
    verdict grant
}
";

pub const RULES_PROGRAM: &str = "\
let r = check_rules(profile, task, rules);
if r.denied {
    verdict deny(\"action denied\", r.violated)
} else {
    verdict grant
}
";

pub const QA_PROGRAM: &str = "\
let v = evaluate_qa_rules(question, choices, answer);
if len(v) > 0 {
    verdict deny(\"action denied\", v) with risk risk_level(len(v))
} else {
    verdict grant with risk risk_level(0)
}
";

pub fn canonical_program(kind: RequestKind) -> &'static str {
    match kind {
        RequestKind::AccessControl => ACCESS_PROGRAM,
        RequestKind::SafetyRules => RULES_PROGRAM,
        RequestKind::QaRules => QA_PROGRAM,
    }
}

const ENGINE_STEP: &str = "and execute the guardrail program with the GDSL interpreter.";

fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn missing(what: &str) -> BackendError {
    BackendError::Unsupported(format!("case facts lack {what}"))
}

/// The plan a careful planner would write for these facts.
pub fn canonical_plan(kind: RequestKind, facts: &StructuredIo, policies: &Policies) -> Result<ActionPlan, BackendError> {
    let steps: [String; 4] = match kind {
        RequestKind::AccessControl => {
            let roles: Vec<String> = policies
                .permissions
                .roles()
                .map(|(r, _)| PermissionTable::display_role(r))
                .collect();
            let identity = facts.identity.as_deref().ok_or_else(|| missing("an identity"))?;
            let required = facts.required_resources.as_ref().ok_or_else(|| missing("required resources"))?;
            let needs: Vec<String> = required
                .iter()
                .map(|(db, cols)| format!("{db} ({})", cols.iter().cloned().collect::<Vec<_>>().join(", ")))
                .collect();
            [
                format!(
                    "The guard request is access control with {} roles: {}. Each role may only use the databases and columns listed for it.",
                    roles.len(),
                    join_names(&roles)
                ),
                format!("The user identity given in the agent input is {identity}."),
                if needs.is_empty() {
                    "The agent output requires no database.".to_string()
                } else {
                    format!("The agent output requires these databases and columns: {}.", needs.join("; "))
                },
                format!(
                    "Call check_access with the identity, the required databases and columns and the permission table, deny with the inaccessible items when there are any, {ENGINE_STEP}"
                ),
            ]
        }
        RequestKind::SafetyRules => {
            let profile = facts.profile.ok_or_else(|| missing("a user profile"))?;
            let related: Vec<String> = policies.rules.related(&facts.query).iter().map(|id| id.to_string()).collect();
            [
                format!(
                    "The guard request is safety control for web actions with {} rules on the user profile.",
                    policies.rules.rules().len()
                ),
                format!(
                    "The user profile is age {}, domestic {}, dr_license {}, vaccine {}, membership {}.",
                    profile.age, profile.domestic, profile.dr_license, profile.vaccine, profile.membership
                ),
                if related.is_empty() {
                    format!("The task \"{}\" relates to none of the rules.", facts.query)
                } else {
                    format!("The task \"{}\" relates to rule(s) {}.", facts.query, related.join(", "))
                },
                format!("Call check_rules with the profile, the task and the rule set, deny with the violated rules when there are any, {ENGINE_STEP}"),
            ]
        }
        RequestKind::QaRules => {
            let choices = facts.choices.as_ref().ok_or_else(|| missing("answer choices"))?;
            let listed: Vec<String> = choices.iter().map(|c| format!("{}: {}", c.letter, c.text)).collect();
            [
                "The guard request is four rules on multiple-choice answers, reported with a risk level from the number of violated rules.".to_string(),
                format!("The question is \"{}\".", facts.query),
                format!("The chosen answer is {} among the choices {}.", facts.final_answer, listed.join("; ")),
                format!("Call evaluate_qa_rules with the question, the choices and the answer, map the count of violations with risk_level, {ENGINE_STEP}"),
            ]
        }
    };
    ActionPlan::new(steps).map_err(|e| BackendError::Unsupported(format!("canonical plan is malformed: {e}")))
}

/// Structured facts embedded in a prompt; the last facts section wins.
pub fn extract_facts(prompt: &str) -> Option<StructuredIo> {
    let start = prompt.rfind(&format!("{H_FACTS}\n"))? + H_FACTS.len() + 1;
    let line = prompt[start..].lines().next()?;
    serde_json::from_str(line).ok()
}

#[derive(Debug, Clone, Default)]
pub struct CanonicalSynthesizer {
    policies: Policies,
}

impl CanonicalSynthesizer {
    pub fn new(policies: Policies) -> Self {
        Self { policies }
    }

    fn facts_and_kind(prompt: &str) -> Result<(StructuredIo, RequestKind), BackendError> {
        let facts = extract_facts(prompt)
            .ok_or_else(|| BackendError::Unsupported("prompt carries no case facts".into()))?;
        let kind = facts
            .inferred_kind()
            .ok_or_else(|| BackendError::Unsupported("case facts do not determine a request kind".into()))?;
        Ok((facts, kind))
    }
}

impl LlmBackend for CanonicalSynthesizer {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let header = prompt.lines().next().unwrap_or_default();
        if header == H_PLANNING {
            let (facts, kind) = Self::facts_and_kind(prompt)?;
            Ok(canonical_plan(kind, &facts, &self.policies)?.render())
        } else if header == H_CODEGEN {
            let (_, kind) = Self::facts_and_kind(prompt)?;
            Ok(canonical_program(kind).to_string())
        } else if header == H_DEBUG {
            let kind = kind_of_source(prompt)
                .ok_or_else(|| BackendError::Unsupported("cannot tell which policy the failing program targets".into()))?;
            Ok(canonical_program(kind).to_string())
        } else {
            Err(BackendError::Unsupported(format!("unrecognized prompt type {header:?}")))
        }
    }

    fn name(&self) -> &'static str {
        "canonical"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{build_debug_prompt, build_plan_prompt, PlanningInstructions};
    use crate::types::{AgentIo, GuardRequest, ResourceSet, TargetAgentSpec};

    fn access_io() -> AgentIo {
        let mut io = AgentIo::new("Identity: general administration\nQuestion: lab?", "uses lab");
        io.structured = Some(StructuredIo {
            identity: Some("general administration".into()),
            required_resources: Some(ResourceSet::from_pairs([("lab", "labname")])),
            query: "lab?".into(),
            ..Default::default()
        });
        io
    }

    #[test]
    fn plan_names_roles() {
        let spec = TargetAgentSpec { name: "a".into(), description: "b".into(), io_format_notes: String::new() };
        let req = GuardRequest { kind: RequestKind::AccessControl, text: "r".into(), policy_ref: "permissions".into() };
        let prompt = build_plan_prompt(&PlanningInstructions::new("x").unwrap(), &spec, &req, &[], &access_io());
        let text = CanonicalSynthesizer::default().complete(&prompt).unwrap();
        let plan = crate::planner::parse_plan(&text).unwrap();
        assert!(plan.steps[0].contains("access control"));
        for role in ["physician", "nursing", "general administration"] {
            assert!(plan.steps[0].contains(role), "{role}");
        }
        assert!(plan.steps[2].contains("lab (labname)"));
    }

    #[test]
    fn debug_prompt_repairs_by_called_function() {
        let p = build_debug_prompt("let r = check_rules(profile, task, rule);", "missing binding \"rule\"").unwrap();
        assert_eq!(CanonicalSynthesizer::default().complete(&p).unwrap(), RULES_PROGRAM);
    }

    #[test]
    fn unknown_prompt_is_unsupported() {
        assert!(matches!(
            CanonicalSynthesizer::default().complete("hello"),
            Err(BackendError::Unsupported(_))
        ));
    }

    #[test]
    fn canonical_programs_compile() {
        let reg = crate::toolbox::Registry::with_defaults();
        for kind in RequestKind::ALL {
            crate::gdsl::GuardrailProgram::compile(canonical_program(kind), &reg).unwrap();
        }
    }
}
