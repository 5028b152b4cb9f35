//! Shared domain types: guard requests, target-agent I/O, policies' resource
//! sets and verdicts, plus verdict rendering.
//!
//! Every type here has a canonical snake_case JSON encoding. Those encodings
//! are the unit of all file formats (memory JSONL, case JSONL, run records)
//! and of the HTTP wire messages.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::toolbox::qa::qa_rule_description;
use crate::toolbox::rules::default_rule_description;

/// Denial substring printed for denied access-control verdicts.
pub const ACCESS_DENIED: &str = "access denied";
/// Denial substring printed for denied safety-rule (and QA rule) verdicts.
pub const ACTION_DENIED: &str = "action denied";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("database {0:?} has an empty column set")]
    EmptyColumns(String),
    #[error("database {0:?} appears more than once after normalization")]
    DuplicateDatabase(String),
    #[error("age {0} is out of range (0..=150)")]
    AgeOutOfRange(u32),
    #[error("label must be 0 or 1, got {0}")]
    BadLabel(u8),
    #[error("malformed verdict: {0}")]
    MalformedVerdict(&'static str),
}

/// Trims, lowercases and collapses internal whitespace runs to `_`.
pub fn normalize_identifier(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    AccessControl,
    SafetyRules,
    QaRules,
}

impl RequestKind {
    pub const ALL: [RequestKind; 3] = [Self::AccessControl, Self::SafetyRules, Self::QaRules];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AccessControl => "access_control",
            Self::SafetyRules => "safety_rules",
            Self::QaRules => "qa_rules",
        }
    }

    /// The denial substring a rendered denial of this kind must contain.
    pub fn denial_text(self) -> &'static str {
        match self {
            Self::AccessControl => ACCESS_DENIED,
            Self::SafetyRules | Self::QaRules => ACTION_DENIED,
        }
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RequestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_identifier(&s.replace('-', "_")).as_str() {
            "access_control" => Ok(Self::AccessControl),
            "safety_rules" => Ok(Self::SafetyRules),
            "qa_rules" => Ok(Self::QaRules),
            other => Err(format!("unknown request kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetAgentSpec {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub io_format_notes: String,
}

impl TargetAgentSpec {
    pub fn validate(&self) -> Result<(), TypeError> {
        if self.name.trim().is_empty() {
            return Err(TypeError::Empty("target agent name"));
        }
        if self.description.trim().is_empty() {
            return Err(TypeError::Empty("target agent description"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardRequest {
    pub kind: RequestKind,
    pub text: String,
    pub policy_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct UserProfile {
    pub age: u32,
    pub domestic: bool,
    pub dr_license: bool,
    pub vaccine: bool,
    pub membership: bool,
}

#[derive(Deserialize)]
struct RawProfile {
    age: u32,
    domestic: bool,
    dr_license: bool,
    vaccine: bool,
    membership: bool,
}

impl TryFrom<RawProfile> for UserProfile {
    type Error = TypeError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        if raw.age > 150 {
            return Err(TypeError::AgeOutOfRange(raw.age));
        }
        Ok(UserProfile {
            age: raw.age,
            domestic: raw.domestic,
            dr_license: raw.dr_license,
            vaccine: raw.vaccine,
            membership: raw.membership,
        })
    }
}

/// Databases mapped to the set of columns used from each, with all names in
/// normalized form. Encoded as `{"db": ["col", ...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<String>>")]
pub struct ResourceSet {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl TryFrom<BTreeMap<String, Vec<String>>> for ResourceSet {
    type Error = TypeError;

    fn try_from(raw: BTreeMap<String, Vec<String>>) -> Result<Self, Self::Error> {
        let mut set = ResourceSet::new();
        for (db, cols) in raw {
            let key = normalize_identifier(&db);
            if set.entries.contains_key(&key) {
                return Err(TypeError::DuplicateDatabase(key));
            }
            if cols.is_empty() {
                return Err(TypeError::EmptyColumns(key));
            }
            for col in cols {
                set.insert(&key, &col);
            }
        }
        Ok(set)
    }
}

impl ResourceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut set = Self::new();
        for (db, col) in pairs {
            set.insert(db, col);
        }
        set
    }

    pub fn insert(&mut self, database: &str, column: &str) {
        self.entries
            .entry(normalize_identifier(database))
            .or_default()
            .insert(normalize_identifier(column));
    }

    pub fn contains(&self, database: &str, column: &str) -> bool {
        self.entries
            .get(database)
            .is_some_and(|cols| cols.contains(column))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of (database, column) pairs.
    pub fn pair_count(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }

    pub fn databases(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn columns(&self, database: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(database)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .flat_map(|(db, cols)| cols.iter().map(move |c| (db.as_str(), c.as_str())))
    }

    pub fn union(&self, other: &ResourceSet) -> ResourceSet {
        let mut out = self.clone();
        for (db, col) in other.pairs() {
            out.insert(db, col);
        }
        out
    }

    pub fn is_subset(&self, other: &ResourceSet) -> bool {
        self.pairs().all(|(db, col)| other.contains(db, col))
    }
}

impl Serialize for ResourceSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

/// Optional parsed annotation of the raw agent texts. Never a replacement for
/// them: prompts are built from the raw texts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredIo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<UserProfile>,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_resources: Option<ResourceSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Choice>>,
    #[serde(default)]
    pub final_answer: String,
}

impl StructuredIo {
    /// Which kind of guard request the annotated facts belong to.
    pub fn inferred_kind(&self) -> Option<RequestKind> {
        if self.identity.is_some() && self.required_resources.is_some() {
            Some(RequestKind::AccessControl)
        } else if self.profile.is_some() {
            Some(RequestKind::SafetyRules)
        } else if self.choices.is_some() {
            Some(RequestKind::QaRules)
        } else {
            None
        }
    }
}

/// One multiple-choice option of a QA case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub letter: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentIo {
    pub input_text: String,
    pub output_log: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<StructuredIo>,
}

impl AgentIo {
    pub fn new(input_text: impl Into<String>, output_log: impl Into<String>) -> Self {
        Self {
            input_text: input_text.into(),
            output_log: output_log.into(),
            structured: None,
        }
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if self.input_text.trim().is_empty() {
            return Err(TypeError::Empty("agent input_text"));
        }
        Ok(())
    }

    /// Text used for demonstration retrieval: input, newline, output log.
    pub fn retrieval_key(&self) -> String {
        format!("{}\n{}", self.input_text, self.output_log)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Granted = 0,
    Denied = 1,
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = TypeError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::Granted),
            1 => Ok(Label::Denied),
            other => Err(TypeError::BadLabel(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    No,
    Low,
    Medium,
    High,
    VeryHigh,
}

impl RiskLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::No => "no",
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
            Self::VeryHigh => "very_high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match normalize_identifier(s).trim_end_matches("_risk") {
            "no" | "none" => Some(Self::No),
            "low" => Some(Self::Low),
            "medium" | "med" => Some(Self::Medium),
            "high" => Some(Self::High),
            "very_high" => Some(Self::VeryHigh),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::No => "no risk",
            Self::Low => "low risk",
            Self::Medium => "medium risk",
            Self::High => "high risk",
            Self::VeryHigh => "very high risk",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetailSet {
    #[serde(default)]
    pub inaccessible: ResourceSet,
    #[serde(default)]
    pub violated_rules: BTreeSet<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskLevel>,
}

impl DetailSet {
    pub fn inaccessible(set: ResourceSet) -> Self {
        Self {
            inaccessible: set,
            ..Self::default()
        }
    }

    pub fn rules(ids: impl IntoIterator<Item = u32>) -> Self {
        Self {
            violated_rules: ids.into_iter().collect(),
            ..Self::default()
        }
    }

    /// True when no resource or rule is listed; the risk level is ignored.
    pub fn is_empty(&self) -> bool {
        self.inaccessible.is_empty() && self.violated_rules.is_empty()
    }

    /// Every item of `self` is also listed in `other`.
    pub fn is_covered_by(&self, other: &DetailSet) -> bool {
        self.inaccessible.is_subset(&other.inaccessible)
            && self.violated_rules.is_subset(&other.violated_rules)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Parse,
    UnknownFunction,
    Type,
    Runtime,
    Protocol,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecStats {
    pub executable_before_debug: bool,
    pub debug_iterations_used: u32,
    pub executable_after_debug: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<ErrorClass>,
}

impl ExecStats {
    pub const MAX_DEBUG_ITERATIONS: u32 = 3;

    /// Stats for a program that ran on the first attempt.
    pub fn clean() -> Self {
        Self {
            executable_before_debug: true,
            debug_iterations_used: 0,
            executable_after_debug: true,
            error_class: None,
        }
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if self.debug_iterations_used > Self::MAX_DEBUG_ITERATIONS {
            return Err(TypeError::MalformedVerdict("more than 3 debug iterations"));
        }
        if self.executable_before_debug && self.debug_iterations_used != 0 {
            return Err(TypeError::MalformedVerdict(
                "debug iterations recorded for a program that ran first time",
            ));
        }
        Ok(())
    }
}

impl Default for ExecStats {
    fn default() -> Self {
        Self::clean()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denial_message: Option<String>,
    #[serde(default)]
    pub details: DetailSet,
    #[serde(default)]
    pub exec_stats: ExecStats,
}

impl Verdict {
    pub fn grant() -> Self {
        Self {
            label: Label::Granted,
            denial_message: None,
            details: DetailSet::default(),
            exec_stats: ExecStats::clean(),
        }
    }

    pub fn deny(message: impl Into<String>, details: DetailSet) -> Self {
        Self {
            label: Label::Denied,
            denial_message: Some(message.into()),
            details,
            exec_stats: ExecStats::clean(),
        }
    }

    pub fn with_risk(mut self, risk: RiskLevel) -> Self {
        self.details.risk = Some(risk);
        self
    }

    pub fn with_stats(mut self, stats: ExecStats) -> Self {
        self.exec_stats = stats;
        self
    }

    pub fn is_denied(&self) -> bool {
        self.label == Label::Denied
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        match self.label {
            Label::Denied if self.denial_message.is_none() => {
                Err(TypeError::MalformedVerdict("denied verdict without a denial message"))
            }
            Label::Granted if self.denial_message.is_some() => {
                Err(TypeError::MalformedVerdict("granted verdict with a denial message"))
            }
            Label::Granted if !self.details.is_empty() => {
                Err(TypeError::MalformedVerdict("granted verdict with details"))
            }
            _ => self.exec_stats.validate(),
        }
    }
}

/// Renders a verdict using the bundled rule descriptions.
pub fn render_verdict(verdict: &Verdict, kind: RequestKind) -> String {
    render_verdict_with(verdict, kind, &|id| match kind {
        RequestKind::QaRules => qa_rule_description(id).map(str::to_string),
        _ => default_rule_description(id).map(str::to_string),
    })
}

/// Renders a verdict, resolving rule ids to descriptions through `describe`.
///
/// The first line is the fixed admit or denial line; the evaluator keys on the
/// denial substrings, so custom denial messages are listed below it.
pub fn render_verdict_with(
    verdict: &Verdict,
    kind: RequestKind,
    describe: &dyn Fn(u32) -> Option<String>,
) -> String {
    let mut out = String::new();
    match verdict.label {
        Label::Granted => {
            out.push_str(match kind {
                RequestKind::AccessControl => "access granted\n",
                _ => "action granted\n",
            });
        }
        Label::Denied => {
            out.push_str(kind.denial_text());
            out.push('\n');
            if let Some(msg) = &verdict.denial_message {
                if !msg.eq_ignore_ascii_case(kind.denial_text()) {
                    out.push_str(&format!("message: {msg}\n"));
                }
            }
            if !verdict.details.inaccessible.is_empty() {
                out.push_str("inaccessible databases and columns:\n");
                for (db, cols) in verdict.details.inaccessible.iter() {
                    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
                    out.push_str(&format!("  {db}: {}\n", cols.join(", ")));
                }
            }
            if !verdict.details.violated_rules.is_empty() {
                out.push_str("violated rules:\n");
                for id in &verdict.details.violated_rules {
                    match describe(*id) {
                        Some(desc) => out.push_str(&format!("  rule {id}: {desc}\n")),
                        None => out.push_str(&format!("  rule {id}\n")),
                    }
                }
            }
        }
    }
    if let Some(risk) = verdict.details.risk {
        out.push_str(&format!("risk level: {}\n", risk.label()));
    }
    out
}
