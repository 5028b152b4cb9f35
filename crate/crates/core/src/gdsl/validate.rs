//! Static checks run before a program is executed.

use super::ast::{ExprKind, Pos, Program, Stmt};
use crate::toolbox::Registry;
use crate::types::ErrorClass;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("unknown function {name:?} at {pos}; only the provided functions may be called")]
    UnknownFunction { name: String, pos: Pos },
    #[error("function {name} expects {expected} argument(s) but {actual} were given at {pos}")]
    Arity { name: String, expected: usize, actual: usize, pos: Pos },
    #[error("unreachable statement at {pos}: a verdict was already issued on this path")]
    Unreachable { pos: Pos },
    #[error("a control path ending at {pos} issues no verdict")]
    MissingVerdict { pos: Pos },
}

impl ValidationError {
    pub fn class(&self) -> ErrorClass {
        match self {
            Self::UnknownFunction { .. } => ErrorClass::UnknownFunction,
            Self::Arity { .. } => ErrorClass::Type,
            Self::Unreachable { .. } | Self::MissingVerdict { .. } => ErrorClass::Parse,
        }
    }
}

pub fn validate(program: &Program, registry: &Registry) -> Result<(), ValidationError> {
    let mut first: Option<ValidationError> = None;
    program.walk_exprs(&mut |e| {
        if first.is_some() {
            return;
        }
        if let ExprKind::Call { name, args } = &e.kind {
            first = match registry.get(name) {
                None => Some(ValidationError::UnknownFunction { name: name.clone(), pos: e.pos }),
                Some((spec, _)) if spec.arity() != args.len() => Some(ValidationError::Arity {
                    name: name.clone(),
                    expected: spec.arity(),
                    actual: args.len(),
                    pos: e.pos,
                }),
                Some(_) => None,
            };
        }
    });
    if let Some(err) = first {
        return Err(err);
    }
    let end = Pos { line: 1, column: 1 };
    if !terminates(&program.stmts)? {
        let pos = program.stmts.last().map_or(end, Stmt::pos);
        return Err(ValidationError::MissingVerdict { pos });
    }
    Ok(())
}

/// Whether every path through `stmts` issues a verdict; rejects statements
/// following a verdict on the same path.
fn terminates(stmts: &[Stmt]) -> Result<bool, ValidationError> {
    let mut done = false;
    for stmt in stmts {
        if done {
            return Err(ValidationError::Unreachable { pos: stmt.pos() });
        }
        done = match stmt {
            Stmt::Let { .. } => false,
            Stmt::Verdict { .. } => true,
            Stmt::If { then_branch, else_branch, .. } => {
                let then_done = terminates(then_branch)?;
                let else_done = match else_branch {
                    Some(b) => terminates(b)?,
                    None => false,
                };
                then_done && else_done
            }
        };
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gdsl::parser::parse;

    fn check(src: &str) -> Result<(), ValidationError> {
        validate(&parse(src).unwrap(), &Registry::with_defaults())
    }

    #[test]
    fn canonical_access_is_valid() {
        check("let r = check_access(role, required, permissions);\nif r.denied { verdict deny(\"access denied\", r.inaccessible) } else { verdict grant }").unwrap();
    }

    #[test]
    fn made_up_function_is_named() {
        let err = check("let r = CheckMagic(role);\nlet s = Other(1);\nverdict grant").unwrap_err();
        assert_eq!(err, ValidationError::UnknownFunction { name: "CheckMagic".into(), pos: Pos { line: 1, column: 9 } });
        assert_eq!(err.class(), ErrorClass::UnknownFunction);
    }

    #[test]
    fn arity_mismatch_reports_counts() {
        let err = check("let r = check_rules(profile, task);\nverdict grant").unwrap_err();
        match err {
            ValidationError::Arity { expected, actual, .. } => assert_eq!((expected, actual), (3, 2)),
            other => panic!("{other:?}"),
        }
        assert!(check("let r = check_rules(profile, task);\nverdict grant")
            .unwrap_err()
            .to_string()
            .contains("expects 3 argument(s) but 2"));
    }

    #[test]
    fn missing_else_verdict() {
        let err = check("if true { verdict grant }").unwrap_err();
        assert!(matches!(err, ValidationError::MissingVerdict { .. }));
        assert!(matches!(check("let a = 1;").unwrap_err(), ValidationError::MissingVerdict { .. }));
        assert!(matches!(check("").unwrap_err(), ValidationError::MissingVerdict { .. }));
    }

    #[test]
    fn statement_after_verdict_is_unreachable() {
        let err = check("verdict grant\nverdict grant").unwrap_err();
        assert_eq!(err, ValidationError::Unreachable { pos: Pos { line: 2, column: 1 } });
        let err = check("if a { verdict grant\nlet b = 1; } else { verdict grant }").unwrap_err();
        assert!(matches!(err, ValidationError::Unreachable { .. }));
    }

    #[test]
    fn nested_branches_terminate() {
        check("if a { if b { verdict grant } else { verdict grant } } else { verdict deny(\"x\", []) }").unwrap();
    }
}
