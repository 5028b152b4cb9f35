//! The function toolbox guardrail programs may call, and the policies those
//! functions evaluate.

pub mod access;
pub mod qa;
pub mod rules;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::gdsl::value::{PolicyRef, Value};
use crate::types::{ErrorClass, RequestKind};

pub use access::{check_access, default_permission_table, AccessResult, PermissionTable, DEFAULT_ROLES, ICU_SCHEMA};
pub use qa::{evaluate_qa_rules, risk_level};
pub use rules::{check_rules, default_rules, Rule, RuleResult, RuleSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("policy parse error: {0}")]
    Parse(String),
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error("cannot read policy file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemType {
    String,
    Int,
    Bool,
    List,
    Map,
    Resources,
    Profile,
    Choices,
    PermissionTable,
    RuleSet,
    AccessResult,
    RuleResult,
    Any,
}

impl fmt::Display for SemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        f.write_str(&name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: SemType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub params: Vec<Param>,
    pub returns: SemType,
    pub doc: String,
}

impl FunctionSpec {
    pub fn new(name: &str, params: &[(&str, SemType)], returns: SemType, doc: &str) -> Self {
        Self {
            name: name.to_string(),
            params: params
                .iter()
                .map(|(n, ty)| Param { name: n.to_string(), ty: *ty })
                .collect(),
            returns,
            doc: doc.to_string(),
        }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// `name(p: type, ...) -> type  # doc`
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{}: {}", p.name, p.ty))
            .collect();
        format!("{}({}) -> {}  # {}", self.name, params.join(", "), self.returns, self.doc)
    }
}

/// Failure raised by a toolbox function; carries the class used for
/// execution statistics.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct CallError {
    pub class: ErrorClass,
    pub message: String,
}

impl CallError {
    pub fn type_error(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Type, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Runtime, message: message.into() }
    }
}

pub type NativeFn = Arc<dyn Fn(&[Value]) -> Result<Value, CallError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("function {0:?} is already registered")]
    Duplicate(String),
    #[error("invalid function name {0:?}")]
    BadName(String),
}

/// Ordered registry of callable functions.
#[derive(Clone, Default)]
pub struct Registry {
    functions: IndexMap<String, (FunctionSpec, NativeFn)>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.functions.keys()).finish()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `check_access`, `check_rules`, `evaluate_qa_rules`,
    /// `risk_level` and `len`.
    pub fn with_defaults() -> Self {
        let mut reg = Self::empty();
        for (spec, f) in builtin_functions() {
            reg.register(spec, f).expect("builtin names are unique");
        }
        reg
    }

    pub fn register(&mut self, spec: FunctionSpec, f: NativeFn) -> Result<&mut Self, RegistryError> {
        let valid = spec
            .name
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && spec.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid || crate::gdsl::lexer::is_keyword(&spec.name) {
            return Err(RegistryError::BadName(spec.name));
        }
        if self.functions.contains_key(&spec.name) {
            return Err(RegistryError::Duplicate(spec.name));
        }
        self.functions.insert(spec.name.clone(), (spec, f));
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<(&FunctionSpec, &NativeFn)> {
        self.functions.get(name).map(|(s, f)| (s, f))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    pub fn specs(&self) -> impl Iterator<Item = &FunctionSpec> {
        self.functions.values().map(|(s, _)| s)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.functions.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn signatures(&self) -> Vec<String> {
        self.specs().map(FunctionSpec::signature).collect()
    }

    /// Copy without the named functions.
    pub fn without(&self, names: &[&str]) -> Self {
        Self {
            functions: self
                .functions
                .iter()
                .filter(|(k, _)| !names.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

fn record(fields: impl IntoIterator<Item = (&'static str, Value)>) -> Value {
    Value::Map(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>())
}

fn expect_str<'a>(v: &'a Value, what: &str) -> Result<&'a str, CallError> {
    v.as_str()
        .ok_or_else(|| CallError::type_error(format!("{what} must be a string, got {}", v.type_name())))
}

fn builtin_functions() -> Vec<(FunctionSpec, NativeFn)> {
    let check_access_fn: NativeFn = Arc::new(|args: &[Value]| {
        let role = expect_str(&args[0], "role")?;
        let required = args[1].to_resources().ok_or_else(|| {
            CallError::type_error(format!(
                "required must be a map of database to column list, got {}",
                args[1].type_name()
            ))
        })?;
        let Value::Policy(PolicyRef::Permissions(table)) = &args[2] else {
            return Err(CallError::type_error(format!(
                "permissions must be a permission_table, got {}",
                args[2].type_name()
            )));
        };
        let result = check_access(role, &required, table)
            .map_err(|e| CallError::runtime(e.to_string()))?;
        Ok(record([
            ("granted", Value::Bool(result.is_granted())),
            ("denied", Value::Bool(!result.is_granted())),
            ("inaccessible", Value::from_resources(&result.inaccessible())),
        ]))
    });

    let check_rules_fn: NativeFn = Arc::new(|args: &[Value]| {
        let profile = args[0].to_profile().ok_or_else(|| {
            CallError::type_error(format!("profile must be a user profile map, got {}", args[0]))
        })?;
        let task = expect_str(&args[1], "task")?;
        let Value::Policy(PolicyRef::Rules(rules)) = &args[2] else {
            return Err(CallError::type_error(format!(
                "rules must be a rule_set, got {}",
                args[2].type_name()
            )));
        };
        let result = check_rules(&profile, task, rules);
        Ok(record([
            ("granted", Value::Bool(result.is_granted())),
            ("denied", Value::Bool(!result.is_granted())),
            (
                "violated",
                Value::List(result.violated().into_iter().map(|id| Value::Int(id.into())).collect()),
            ),
        ]))
    });

    let qa_fn: NativeFn = Arc::new(|args: &[Value]| {
        let question = expect_str(&args[0], "question")?;
        let choices = args[1]
            .to_choices()
            .ok_or_else(|| CallError::type_error("choices must map letters to option texts"))?;
        let answer = expect_str(&args[2], "answer")?;
        let violated = evaluate_qa_rules(question, &choices, answer)
            .map_err(|e| CallError::runtime(e.to_string()))?;
        Ok(Value::List(violated.into_iter().map(|id| Value::Int(id.into())).collect()))
    });

    let risk_fn: NativeFn = Arc::new(|args: &[Value]| {
        let count = args[0]
            .as_int()
            .ok_or_else(|| CallError::type_error(format!("count must be an int, got {}", args[0].type_name())))?;
        let count = u32::try_from(count).map_err(|_| CallError::runtime("negative violation count"))?;
        let level = risk_level(count).map_err(|e| CallError::runtime(e.to_string()))?;
        Ok(Value::Str(level.as_str().to_string()))
    });

    let len_fn: NativeFn = Arc::new(|args: &[Value]| match &args[0] {
        Value::List(items) => Ok(Value::Int(items.len() as i64)),
        Value::Map(map) => Ok(Value::Int(map.len() as i64)),
        Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
        other => Err(CallError::type_error(format!("len() of {}", other.type_name()))),
    });

    vec![
        (
            FunctionSpec::new(
                "check_access",
                &[
                    ("role", SemType::String),
                    ("required", SemType::Resources),
                    ("permissions", SemType::PermissionTable),
                ],
                SemType::AccessResult,
                "compares the databases/columns required by the agent with those the role may access; result has fields granted, denied, inaccessible",
            ),
            check_access_fn,
        ),
        (
            FunctionSpec::new(
                "check_rules",
                &[("profile", SemType::Profile), ("task", SemType::String), ("rules", SemType::RuleSet)],
                SemType::RuleResult,
                "checks the task against every safety rule it relates to; result has fields granted, denied, violated (list of rule ids)",
            ),
            check_rules_fn,
        ),
        (
            FunctionSpec::new(
                "evaluate_qa_rules",
                &[("question", SemType::String), ("choices", SemType::Choices), ("answer", SemType::String)],
                SemType::List,
                "returns the ids of the QA rules violated by the answer",
            ),
            qa_fn,
        ),
        (
            FunctionSpec::new(
                "risk_level",
                &[("count", SemType::Int)],
                SemType::String,
                "maps a violation count 0..4 to no/low/medium/high/very_high",
            ),
            risk_fn,
        ),
        (
            FunctionSpec::new("len", &[("items", SemType::Any)], SemType::Int, "number of items in a list or map"),
            len_fn,
        ),
    ]
}

/// The loaded policies, addressed by the `policy_ref` of a guard request.
#[derive(Debug, Clone)]
pub struct Policies {
    pub permissions: Arc<PermissionTable>,
    pub rules: Arc<RuleSet>,
}

pub const PERMISSIONS_REF: &str = "permissions";
pub const RULES_REF: &str = "rules";
pub const QA_RULES_REF: &str = "qa_rules";

impl Default for Policies {
    fn default() -> Self {
        Self {
            permissions: Arc::new(default_permission_table()),
            rules: Arc::new(default_rules()),
        }
    }
}

impl Policies {
    /// Loads policy files, falling back to the bundled defaults.
    pub fn load(permissions: Option<&Path>, rules: Option<&Path>) -> Result<Self, PolicyError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| PolicyError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        let permissions = match permissions {
            Some(p) => PermissionTable::from_json(&read(p)?)?,
            None => default_permission_table(),
        };
        let rules = match rules {
            Some(p) => RuleSet::from_json(&read(p)?)?,
            None => default_rules(),
        };
        Ok(Self { permissions: Arc::new(permissions), rules: Arc::new(rules) })
    }

    /// Default `policy_ref` for a request kind.
    pub fn default_ref(kind: RequestKind) -> &'static str {
        match kind {
            RequestKind::AccessControl => PERMISSIONS_REF,
            RequestKind::SafetyRules => RULES_REF,
            RequestKind::QaRules => QA_RULES_REF,
        }
    }

    /// Checks that `policy_ref` names a loaded policy of the right kind.
    pub fn resolve(&self, kind: RequestKind, policy_ref: &str) -> Result<(), PolicyError> {
        if policy_ref == Self::default_ref(kind) {
            Ok(())
        } else {
            Err(PolicyError::UnknownPolicy(policy_ref.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_registration_rejected() {
        let mut reg = Registry::with_defaults();
        let (spec, f) = builtin_functions().remove(0);
        assert_eq!(reg.register(spec, f).unwrap_err(), RegistryError::Duplicate("check_access".into()));
    }

    #[test]
    fn bad_names_rejected() {
        let mut reg = Registry::empty();
        let f: NativeFn = Arc::new(|_| Ok(Value::Bool(true)));
        for name in ["", "1abc", "a-b", "verdict", "let"] {
            let spec = FunctionSpec::new(name, &[], SemType::Bool, "x");
            assert!(reg.register(spec, f.clone()).is_err(), "{name}");
        }
    }

    #[test]
    fn signature_rendering() {
        let reg = Registry::with_defaults();
        let sig = &reg.signatures()[0];
        assert!(sig.starts_with(
            "check_access(role: string, required: resources, permissions: permission_table) -> access_result"
        ));
    }

    #[test]
    fn register_third_function_extends_signatures() {
        let mut reg = Registry::with_defaults().without(&["evaluate_qa_rules", "risk_level", "len"]);
        assert_eq!(reg.len(), 2);
        let f: NativeFn = Arc::new(|_| Ok(Value::Bool(true)));
        reg.register(FunctionSpec::new("always", &[], SemType::Bool, "true"), f).unwrap();
        assert_eq!(reg.signatures().len(), 3);
    }

    #[test]
    fn policy_refs_resolve() {
        let p = Policies::default();
        assert!(p.resolve(RequestKind::AccessControl, "permissions").is_ok());
        assert!(p.resolve(RequestKind::AccessControl, "rules").is_err());
    }
}
