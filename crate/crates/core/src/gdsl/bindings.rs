//! Case facts exposed to guardrail programs as named values.

use std::collections::BTreeMap;

use super::value::{PolicyRef, Value};
use crate::toolbox::Policies;
use crate::types::{AgentIo, RequestKind};

/// Every name a program may read. Which of them are bound depends on the
/// request kind and on the facts the case carries.
pub const BINDING_NAMES: [&str; 12] = [
    "role",
    "required",
    "permissions",
    "query",
    "profile",
    "task",
    "rules",
    "question",
    "choices",
    "answer",
    "agent_input",
    "agent_output",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    values: BTreeMap<String, Value>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `name`; panics on names outside [`BINDING_NAMES`].
    pub fn set(&mut self, name: &str, value: Value) -> &mut Self {
        assert!(BINDING_NAMES.contains(&name), "unsupported binding name {name:?}");
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Builds the bindings for a case of the given kind.
    ///
    /// The raw texts are always bound. Structured facts are bound when
    /// present; the policy handle matching the kind is always bound.
    pub fn for_case(io: &AgentIo, kind: RequestKind, policies: &Policies) -> Self {
        let mut b = Self::new();
        b.set("agent_input", Value::Str(io.input_text.clone()));
        b.set("agent_output", Value::Str(io.output_log.clone()));
        match kind {
            RequestKind::AccessControl => {
                b.set("permissions", Value::Policy(PolicyRef::Permissions(policies.permissions.clone())));
            }
            RequestKind::SafetyRules => {
                b.set("rules", Value::Policy(PolicyRef::Rules(policies.rules.clone())));
            }
            RequestKind::QaRules => {}
        }
        let Some(facts) = &io.structured else { return b };
        b.set("query", Value::Str(facts.query.clone()));
        match kind {
            RequestKind::AccessControl => {
                if let Some(role) = &facts.identity {
                    b.set("role", Value::Str(role.clone()));
                }
                if let Some(required) = &facts.required_resources {
                    b.set("required", Value::from_resources(required));
                }
            }
            RequestKind::SafetyRules => {
                if let Some(profile) = &facts.profile {
                    b.set("profile", Value::from_profile(profile));
                }
                b.set("task", Value::Str(facts.query.clone()));
            }
            RequestKind::QaRules => {
                b.set("question", Value::Str(facts.query.clone()));
                if let Some(choices) = &facts.choices {
                    b.set("choices", Value::from_choices(choices));
                }
                b.set("answer", Value::Str(facts.final_answer.clone()));
            }
        }
        b
    }

    /// JSON object form, used by the external interpreter protocol.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(self.values.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ResourceSet, StructuredIo};

    #[test]
    fn access_case_bindings() {
        let mut io = AgentIo::new("Show lab results", "SELECT labname FROM lab");
        io.structured = Some(StructuredIo {
            identity: Some("general administration".into()),
            required_resources: Some(ResourceSet::from_pairs([("lab", "labname")])),
            query: "Show lab results".into(),
            ..Default::default()
        });
        let b = Bindings::for_case(&io, RequestKind::AccessControl, &Policies::default());
        let names: Vec<&str> = b.names().collect();
        assert_eq!(names, ["agent_input", "agent_output", "permissions", "query", "required", "role"]);
        assert_eq!(b.to_json()["required"], serde_json::json!({"lab": ["labname"]}));
    }

    #[test]
    fn raw_only_case_binds_texts() {
        let io = AgentIo::new("q", "a");
        let b = Bindings::for_case(&io, RequestKind::QaRules, &Policies::default());
        assert_eq!(b.names().count(), 2);
    }

    #[test]
    #[should_panic]
    fn unknown_name_panics() {
        Bindings::new().set("env", Value::Int(1));
    }
}
