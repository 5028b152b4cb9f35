//! The guardrail program language: lexer, parser, validator, interpreter,
//! external dispatch, and the generate/execute/debug loop.

pub mod ast;
pub mod bindings;
pub mod external;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod pipeline;
pub mod validate;
pub mod value;

use serde::{Deserialize, Serialize};

pub use ast::{Pos, Program};
pub use bindings::{Bindings, BINDING_NAMES};
pub use external::{ExecRequest, ExecResponse, ExternalError, ExternalExecutor, DEFAULT_TIMEOUT};
pub use interp::{execute, ExecError};
pub use parser::{parse, ParseError};
pub use pipeline::{guard, GuardContext, GuardError, GuardOutcome, GuardReport};
pub use validate::{validate, ValidationError};
pub use value::{PolicyRef, Value};

use crate::toolbox::Registry;
use crate::types::ErrorClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    InternalDsl,
    ExternalInterpreter,
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dsl" | "internal_dsl" => Ok(Self::InternalDsl),
            "external" | "external_interpreter" => Ok(Self::ExternalInterpreter),
            other => Err(format!("unknown engine {other:?} (expected dsl or external)")),
        }
    }
}

/// Source text plus, for the internal engine, its checked syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardrailProgram {
    pub source: String,
    pub ast: Option<Program>,
    pub target_engine: Engine,
}

/// Reason a program could not be compiled for the internal engine.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

impl CompileError {
    pub fn class(&self) -> ErrorClass {
        match self {
            Self::Parse(_) => ErrorClass::Parse,
            Self::Invalid(e) => e.class(),
        }
    }
}

impl GuardrailProgram {
    /// Parses and validates `source` for the internal engine.
    pub fn compile(source: &str, registry: &Registry) -> Result<Self, CompileError> {
        let ast = parse(source)?;
        validate(&ast, registry)?;
        Ok(Self { source: source.to_string(), ast: Some(ast), target_engine: Engine::InternalDsl })
    }

    /// Wraps foreign source for the external interpreter.
    pub fn external(source: &str) -> Self {
        Self { source: source.to_string(), ast: None, target_engine: Engine::ExternalInterpreter }
    }
}

/// Pulls program source out of a model completion: the body of the first
/// fenced block when there is one, the whole text otherwise.
pub fn extract_source(completion: &str) -> String {
    let Some(start) = completion.find("```") else {
        return completion.trim().to_string();
    };
    let after = &completion[start + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    body[..end].trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fences_are_stripped() {
        assert_eq!(extract_source("```gdsl\nverdict grant\n```\n"), "verdict grant");
        assert_eq!(extract_source("Here:\n```\nverdict grant\n```"), "verdict grant");
        assert_eq!(extract_source("  verdict grant \n"), "verdict grant");
        assert_eq!(extract_source("```\nverdict grant"), "verdict grant");
    }

    #[test]
    fn compile_classifies_failures() {
        let reg = Registry::with_defaults();
        assert_eq!(GuardrailProgram::compile("verdict", &reg).unwrap_err().class(), ErrorClass::Parse);
        assert_eq!(
            GuardrailProgram::compile("let a = Magic();\nverdict grant", &reg).unwrap_err().class(),
            ErrorClass::UnknownFunction
        );
        let p = GuardrailProgram::compile("verdict grant", &reg).unwrap();
        assert!(p.ast.is_some());
        assert!(GuardrailProgram::external("x").ast.is_none());
    }

    #[test]
    fn engine_names() {
        assert_eq!("dsl".parse::<Engine>().unwrap(), Engine::InternalDsl);
        assert_eq!("external".parse::<Engine>().unwrap(), Engine::ExternalInterpreter);
        assert!("python".parse::<Engine>().is_err());
    }
}
