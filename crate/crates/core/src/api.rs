//! Request and response bodies of the guard service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bench::GuardCase;
use crate::engine::CaseRun;
use crate::evaluator::{breakdown_with, executable_rate, score_with, EvalError, ExecutableRate, GroupBy, Metrics, RunRecord, ScoreOptions};
use crate::memory::MemoryEntry;
use crate::types::{AgentIo, ExecStats, GuardRequest, RequestKind, Verdict};

/// Body of `POST /v1/guard`. A full [`GuardCase`] is accepted; its label
/// and truth fields are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub kind: RequestKind,
    pub agent_io: AgentIo,
    /// Overrides the bundled guard request text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_ref: Option<String>,
}

impl GuardBody {
    pub fn new(kind: RequestKind, agent_io: AgentIo) -> Self {
        Self { id: None, kind, agent_io, request_text: None, policy_ref: None }
    }

    /// The guard request to enforce, starting from the bundled one.
    pub fn request(&self, bundled: GuardRequest) -> GuardRequest {
        GuardRequest {
            kind: self.kind,
            text: self.request_text.clone().unwrap_or(bundled.text),
            policy_ref: self.policy_ref.clone().unwrap_or(bundled.policy_ref),
        }
    }
}

impl From<&GuardCase> for GuardBody {
    fn from(case: &GuardCase) -> Self {
        Self { id: Some(case.id.clone()), ..Self::new(case.kind, case.agent_io.clone()) }
    }
}

/// Successful reply of `POST /v1/guard`: the verdict plus its rendering and
/// the program that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardReply {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub rendered: String,
    pub program: String,
}

/// Error reply of every route.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_stats: Option<ExecStats>,
}

pub const CODE_MALFORMED: &str = "malformed_body";
pub const CODE_TOO_LARGE: &str = "body_too_large";
pub const CODE_UNPROCESSABLE: &str = "unprocessable";
pub const CODE_BACKEND: &str = "backend_unavailable";
pub const CODE_GUARD_FAILURE: &str = "guard_failure";
pub const CODE_INTERNAL: &str = "internal";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalBody {
    pub cases: Vec<GuardCase>,
    #[serde(default)]
    pub options: ScoreOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBody {
    pub records: Vec<RunRecord>,
    #[serde(default)]
    pub options: ScoreOptions,
}

/// Metrics of a finished batch, with per-role and per-rule breakdowns where
/// the records carry the keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metrics: Metrics,
    pub executable_rate: ExecutableRate,
    #[serde(default)]
    pub breakdowns: BTreeMap<String, BTreeMap<String, Metrics>>,
    /// Cases on which no program ran within the debug cap.
    #[serde(default)]
    pub failures: Vec<String>,
}

impl ScoreReport {
    pub fn from_records(records: &[RunRecord], options: ScoreOptions) -> Result<Self, EvalError> {
        let metrics = score_with(records, options)?;
        let mut breakdowns = BTreeMap::new();
        let with_role: Vec<RunRecord> = records.iter().filter(|r| r.role.is_some()).cloned().collect();
        if !with_role.is_empty() {
            breakdowns.insert("role".to_string(), breakdown_with(&with_role, GroupBy::Role, options)?);
        }
        let rules: Vec<RunRecord> = records.iter().filter(|r| r.kind == RequestKind::SafetyRules).cloned().collect();
        if !rules.is_empty() {
            let by_rule = breakdown_with(&rules, GroupBy::Rule, options)?;
            if !by_rule.is_empty() {
                breakdowns.insert("rule".to_string(), by_rule);
            }
        }
        let failures = records.iter().filter(|r| r.predicted_details.is_none()).map(|r| r.case_id.clone()).collect();
        Ok(Self { metrics, executable_rate: executable_rate(records), breakdowns, failures })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReply {
    pub records: Vec<RunRecord>,
    pub report: ScoreReport,
}

impl EvalReply {
    pub fn from_runs(runs: Vec<CaseRun>, options: ScoreOptions) -> Result<Self, EvalError> {
        let records: Vec<RunRecord> = runs.into_iter().map(|r| r.record).collect();
        let report = ScoreReport::from_records(&records, options)?;
        Ok(Self { records, report })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryList {
    pub entries: Vec<MemoryEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryInserted {
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub backend: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::smoke_cases;
    use crate::bridge::canonical::CanonicalSynthesizer;
    use crate::engine::{seeded_memory, EngineConfig, GuardEngine};
    use crate::toolbox::Policies;

    #[test]
    fn guard_case_json_is_a_guard_body() {
        let case = &smoke_cases()[0];
        let body: GuardBody = serde_json::from_str(&serde_json::to_string(case).unwrap()).unwrap();
        assert_eq!(body, GuardBody::from(case));
    }

    #[test]
    fn reply_flattens_the_verdict() {
        let reply = GuardReply { verdict: Verdict::grant(), rendered: "granted".into(), program: "verdict grant".into() };
        let text = serde_json::to_string(&reply).unwrap();
        assert!(text.starts_with(r#"{"label":0"#), "{text}");
        assert_eq!(serde_json::from_str::<Verdict>(&text).unwrap(), Verdict::grant());
        assert_eq!(serde_json::from_str::<GuardReply>(&text).unwrap(), reply);
    }

    #[test]
    fn request_overrides() {
        let body = GuardBody { policy_ref: Some("other".into()), ..GuardBody::new(RequestKind::AccessControl, AgentIo::new("a", "b")) };
        let bundled = GuardRequest { kind: RequestKind::AccessControl, text: "t".into(), policy_ref: "permissions".into() };
        let req = body.request(bundled);
        assert_eq!((req.text.as_str(), req.policy_ref.as_str()), ("t", "other"));
    }

    #[test]
    fn eval_reply_has_breakdowns() {
        let policies = Policies::default();
        let engine = GuardEngine::new(
            EngineConfig::default(),
            policies.clone(),
            seeded_memory(&policies),
            std::sync::Arc::new(CanonicalSynthesizer::new(policies)),
        )
        .unwrap();
        let runs = engine.eval(&smoke_cases()).unwrap();
        let reply = EvalReply::from_runs(runs, ScoreOptions::default()).unwrap();
        assert_eq!(reply.records.len(), 6);
        assert!(reply.report.failures.is_empty());
        assert_eq!(reply.report.breakdowns["role"].len(), 2);
        assert_eq!(reply.report.breakdowns["rule"].keys().collect::<Vec<_>>(), ["rule 4"]);
        assert!(matches!(EvalReply::from_runs(vec![], ScoreOptions::default()), Err(EvalError::Empty)));
    }
}
