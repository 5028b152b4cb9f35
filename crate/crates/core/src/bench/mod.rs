//! Benchmark cases: schema, loading, the ground-truth labeling oracle,
//! synthetic suite generators, class balancing and statistics.

pub mod balance;
pub mod generate;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use balance::{balance_mind2web, BALANCE_TARGET};
pub use generate::{generate_eicu_ac, generate_mind2web_raw, generate_mind2web_sc, smoke_cases, EICU_AC_MARGINALS};

use crate::gdsl::Bindings;
use crate::toolbox::{check_access, check_rules, evaluate_qa_rules, risk_level, PermissionTable, Policies, PolicyError};
use crate::types::{AgentIo, DetailSet, Label, RequestKind, ResourceSet, StructuredIo, UserProfile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardCase {
    pub id: String,
    pub kind: RequestKind,
    pub agent_io: AgentIo,
    pub label: Label,
    #[serde(default)]
    pub truth_details: DetailSet,
    #[serde(default = "yes")]
    pub agent_answer_correct: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate case id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("case {id}: {message}")]
    MissingFacts { id: String, message: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("cannot balance: {0}")]
    Infeasible(String),
}

impl GuardCase {
    pub fn facts(&self) -> Option<&StructuredIo> {
        self.agent_io.structured.as_ref()
    }

    pub fn identity(&self) -> Option<&str> {
        self.facts()?.identity.as_deref()
    }

    pub fn profile(&self) -> Option<UserProfile> {
        self.facts()?.profile
    }

    /// The question (access and QA kinds) or the task (rules kind).
    pub fn query(&self) -> Option<&str> {
        self.facts().map(|f| f.query.as_str())
    }

    pub fn required(&self) -> Option<&ResourceSet> {
        self.facts()?.required_resources.as_ref()
    }

    /// Checks the label/details invariant and that the facts needed by the
    /// case kind are present.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty case id".into());
        }
        self.agent_io.validate().map_err(|e| e.to_string())?;
        match self.label {
            Label::Denied if self.truth_details.is_empty() => {
                return Err(format!("case {}: label 1 requires nonempty truth_details", self.id))
            }
            Label::Granted if !self.truth_details.is_empty() => {
                return Err(format!("case {}: label 0 requires empty truth_details", self.id))
            }
            _ => {}
        }
        required_facts(self.kind, &self.agent_io).map_err(|m| format!("case {}: {m}", self.id))
    }
}

fn required_facts(kind: RequestKind, io: &AgentIo) -> Result<(), String> {
    let facts = io.structured.as_ref().ok_or("agent_io.structured is missing")?;
    let missing = match kind {
        RequestKind::AccessControl if facts.identity.is_none() => Some("identity"),
        RequestKind::AccessControl if facts.required_resources.is_none() => Some("required_resources"),
        RequestKind::SafetyRules if facts.profile.is_none() => Some("profile"),
        RequestKind::QaRules if facts.choices.is_none() => Some("choices"),
        _ => None,
    };
    match missing {
        Some(field) => Err(format!("{} case lacks structured field {field}", kind)),
        None => Ok(()),
    }
}

/// Reads a JSONL case file. Blank lines are skipped. When `kind` is given,
/// every case must be of that kind.
pub fn load_cases(path: &Path, kind: Option<RequestKind>) -> Result<Vec<GuardCase>, BenchError> {
    let file = std::fs::File::open(path)
        .map_err(|source| BenchError::Io { path: path.display().to_string(), source })?;
    parse_cases(BufReader::new(file), kind, &path.display().to_string())
}

pub fn parse_cases(reader: impl BufRead, kind: Option<RequestKind>, shown: &str) -> Result<Vec<GuardCase>, BenchError> {
    let mut cases = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| BenchError::Io { path: shown.to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let case: GuardCase = serde_json::from_str(&line)
            .map_err(|e| BenchError::Schema { line: line_no, message: e.to_string() })?;
        if let Some(k) = kind {
            if case.kind != k {
                return Err(BenchError::Schema {
                    line: line_no,
                    message: format!("expected a {k} case, found {}", case.kind),
                });
            }
        }
        case.validate().map_err(|message| BenchError::Schema { line: line_no, message })?;
        if !ids.insert(case.id.clone()) {
            return Err(BenchError::DuplicateId { line: line_no, id: case.id });
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn save_cases(cases: &[GuardCase], path: &Path) -> Result<(), BenchError> {
    let io_err = |source| BenchError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for c in cases {
        writeln!(w, "{}", serde_json::to_string(c).expect("cases serialize")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Ground-truth label and details for a case of `kind` described by `io`.
pub fn label_case_io(kind: RequestKind, io: &AgentIo, policies: &Policies) -> Result<(Label, DetailSet), BenchError> {
    let facts = io.structured.as_ref().ok_or_else(|| BenchError::MissingFacts {
        id: String::new(),
        message: "no structured facts".into(),
    })?;
    let missing = |field: &str| BenchError::MissingFacts { id: String::new(), message: format!("missing {field}") };
    match kind {
        RequestKind::AccessControl => {
            let role = facts.identity.as_deref().ok_or_else(|| missing("identity"))?;
            let required = facts.required_resources.as_ref().ok_or_else(|| missing("required_resources"))?;
            let result = check_access(role, required, &policies.permissions)?;
            Ok(if result.is_granted() {
                (Label::Granted, DetailSet::default())
            } else {
                (Label::Denied, DetailSet::inaccessible(result.inaccessible()))
            })
        }
        RequestKind::SafetyRules => {
            let profile = facts.profile.ok_or_else(|| missing("profile"))?;
            let violated = check_rules(&profile, &facts.query, &policies.rules).violated();
            Ok(if violated.is_empty() {
                (Label::Granted, DetailSet::default())
            } else {
                (Label::Denied, DetailSet::rules(violated))
            })
        }
        RequestKind::QaRules => {
            let choices = facts.choices.as_ref().ok_or_else(|| missing("choices"))?;
            let violated = evaluate_qa_rules(&facts.query, choices, &facts.final_answer)?;
            let risk = risk_level(violated.len() as u32)?;
            let label = if violated.is_empty() { Label::Granted } else { Label::Denied };
            let mut details = DetailSet::rules(violated);
            details.risk = Some(risk);
            Ok((label, details))
        }
    }
}

/// The labeling oracle every guard verdict is compared against.
pub fn label_case(case: &GuardCase, policies: &Policies) -> Result<(Label, DetailSet), BenchError> {
    label_case_io(case.kind, &case.agent_io, policies).map_err(|e| match e {
        BenchError::MissingFacts { message, .. } => BenchError::MissingFacts { id: case.id.clone(), message },
        other => other,
    })
}

/// Program bindings for a case; errors when the facts its kind needs are
/// missing.
pub fn make_bindings(case: &GuardCase, policies: &Policies) -> Result<Bindings, BenchError> {
    required_facts(case.kind, &case.agent_io)
        .map_err(|message| BenchError::MissingFacts { id: case.id.clone(), message })?;
    Ok(Bindings::for_case(&case.agent_io, case.kind, policies))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    /// `[label 0, label 1]` counts.
    pub labels: [usize; 2],
    /// `[label 0, label 1]` counts per role (access cases), per first
    /// violated or related rule (rules cases, `unrelated` when none), or
    /// `qa`.
    pub groups: BTreeMap<String, [usize; 2]>,
    /// Label-1 cases per violated rule; a case violating two rules counts
    /// for both.
    pub rule_violations: BTreeMap<u32, usize>,
    pub unique_queries: usize,
}

pub fn dataset_stats(cases: &[GuardCase], policies: &Policies) -> DatasetStats {
    let mut stats = DatasetStats { total: cases.len(), ..Default::default() };
    let mut queries = BTreeSet::new();
    for c in cases {
        let l = usize::from(u8::from(c.label));
        stats.labels[l] += 1;
        if let Some(q) = c.query() {
            queries.insert(q.to_string());
        }
        let group = match c.kind {
            RequestKind::AccessControl => {
                c.identity().map(PermissionTable::display_role).unwrap_or_else(|| "unknown".into())
            }
            RequestKind::SafetyRules => {
                let first = c
                    .truth_details
                    .violated_rules
                    .iter()
                    .next()
                    .copied()
                    .or_else(|| c.query().and_then(|q| policies.rules.related(q).into_iter().next()));
                first.map_or_else(|| "unrelated".to_string(), |id| format!("rule {id}"))
            }
            RequestKind::QaRules => "qa".to_string(),
        };
        stats.groups.entry(group).or_default()[l] += 1;
        if c.label == Label::Denied {
            for id in &c.truth_details.violated_rules {
                *stats.rule_violations.entry(*id).or_default() += 1;
            }
        }
    }
    stats.unique_queries = queries.len();
    stats
}
