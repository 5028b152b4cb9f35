//! Runtime values of guardrail programs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::toolbox::access::PermissionTable;
use crate::toolbox::rules::RuleSet;
use crate::types::{Choice, ResourceSet, UserProfile};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Bool(bool),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
    Policy(PolicyRef),
}

/// Opaque handle on a loaded policy. Programs can pass it to toolbox
/// functions but cannot inspect it.
#[derive(Debug, Clone)]
pub enum PolicyRef {
    Permissions(Arc<PermissionTable>),
    Rules(Arc<RuleSet>),
}

impl PartialEq for PolicyRef {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Permissions(a), Self::Permissions(b)) => Arc::ptr_eq(a, b) || a == b,
            (Self::Rules(a), Self::Rules(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::List(_) => "list",
            Value::Map(_) => "map",
            Value::Policy(PolicyRef::Permissions(_)) => "permission_table",
            Value::Policy(PolicyRef::Rules(_)) => "rule_set",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn from_resources(set: &ResourceSet) -> Value {
        Value::Map(
            set.iter()
                .map(|(db, cols)| {
                    (
                        db.to_string(),
                        Value::List(cols.iter().map(|c| Value::Str(c.clone())).collect()),
                    )
                })
                .collect(),
        )
    }

    /// Reads a `{db: [col, ...]}` map. `None` when the shape does not match.
    pub fn to_resources(&self) -> Option<ResourceSet> {
        let Value::Map(map) = self else { return None };
        let mut set = ResourceSet::new();
        for (db, cols) in map {
            let Value::List(cols) = cols else { return None };
            for col in cols {
                set.insert(db, col.as_str()?);
            }
        }
        Some(set)
    }

    pub fn from_profile(profile: &UserProfile) -> Value {
        let mut map = BTreeMap::new();
        map.insert("age".to_string(), Value::Int(i64::from(profile.age)));
        map.insert("domestic".to_string(), Value::Bool(profile.domestic));
        map.insert("dr_license".to_string(), Value::Bool(profile.dr_license));
        map.insert("vaccine".to_string(), Value::Bool(profile.vaccine));
        map.insert("membership".to_string(), Value::Bool(profile.membership));
        Value::Map(map)
    }

    pub fn to_profile(&self) -> Option<UserProfile> {
        let Value::Map(map) = self else { return None };
        let age = u32::try_from(map.get("age")?.as_int()?).ok()?;
        if age > 150 {
            return None;
        }
        Some(UserProfile {
            age,
            domestic: map.get("domestic")?.as_bool()?,
            dr_license: map.get("dr_license")?.as_bool()?,
            vaccine: map.get("vaccine")?.as_bool()?,
            membership: map.get("membership")?.as_bool()?,
        })
    }

    pub fn from_choices(choices: &[Choice]) -> Value {
        Value::Map(
            choices
                .iter()
                .map(|c| (c.letter.clone(), Value::Str(c.text.clone())))
                .collect(),
        )
    }

    /// Accepts either `{letter: text}` or `[{letter, text}, ...]`.
    pub fn to_choices(&self) -> Option<Vec<Choice>> {
        match self {
            Value::Map(map) => map
                .iter()
                .map(|(letter, text)| {
                    Some(Choice {
                        letter: letter.clone(),
                        text: text.as_str()?.to_string(),
                    })
                })
                .collect(),
            Value::List(items) => items
                .iter()
                .map(|item| {
                    let Value::Map(m) = item else { return None };
                    Some(Choice {
                        letter: m.get("letter")?.as_str()?.to_string(),
                        text: m.get("text")?.as_str()?.to_string(),
                    })
                })
                .collect(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::List(items) => serde_json::Value::Array(items.iter().map(Value::to_json).collect()),
            Value::Map(map) => serde_json::Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
            Value::Policy(PolicyRef::Permissions(table)) => {
                serde_json::to_value(table.as_ref()).unwrap_or(serde_json::Value::Null)
            }
            Value::Policy(PolicyRef::Rules(rules)) => {
                serde_json::to_value(rules.as_ref()).unwrap_or(serde_json::Value::Null)
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Policy(_) => write!(f, "<{}>", self.type_name()),
            other => write!(f, "{}", other.to_json()),
        }
    }
}
