//! Tree-walking interpreter. Programs are loop-free, so evaluation always
//! terminates; the only effect is the returned verdict.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{BinOp, Decision, Expr, ExprKind, Pos, Program, Stmt};
use super::bindings::Bindings;
use super::value::Value;
use crate::toolbox::{CallError, Registry};
use crate::types::{DetailSet, ErrorClass, RiskLevel, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} error at {pos}: {message}")]
pub struct ExecError {
    pub class: ErrorClass,
    pub kind: &'static str,
    pub message: String,
    pub pos: Pos,
}

impl ExecError {
    fn type_error(pos: Pos, message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Type, kind: "type", message: message.into(), pos }
    }

    fn runtime(pos: Pos, message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Runtime, kind: "runtime", message: message.into(), pos }
    }

    fn from_call(pos: Pos, name: &str, e: CallError) -> Self {
        let message = format!("in {name}(): {}", e.message);
        match e.class {
            ErrorClass::Type => Self::type_error(pos, message),
            class => Self { class, kind: "runtime", message, pos },
        }
    }
}

/// Runs a validated program against the case bindings.
pub fn execute(program: &Program, registry: &Registry, bindings: &Bindings) -> Result<Verdict, ExecError> {
    let mut interp = Interp { registry, bindings, locals: BTreeMap::new() };
    match interp.block(&program.stmts)? {
        Some(v) => Ok(v),
        None => Err(ExecError::runtime(Pos { line: 1, column: 1 }, "program finished without a verdict")),
    }
}

struct Interp<'a> {
    registry: &'a Registry,
    bindings: &'a Bindings,
    locals: BTreeMap<String, Value>,
}

impl Interp<'_> {
    fn block(&mut self, stmts: &[Stmt]) -> Result<Option<Verdict>, ExecError> {
        for stmt in stmts {
            match stmt {
                Stmt::Let { name, value, .. } => {
                    let v = self.eval(value)?;
                    self.locals.insert(name.clone(), v);
                }
                Stmt::If { cond, then_branch, else_branch, .. } => {
                    let c = self.eval(cond)?;
                    let Value::Bool(c) = c else {
                        return Err(ExecError::type_error(
                            cond.pos,
                            format!("if condition must be a bool, got {}", c.type_name()),
                        ));
                    };
                    let branch = if c { Some(then_branch) } else { else_branch.as_ref() };
                    if let Some(branch) = branch {
                        if let Some(v) = self.block(branch)? {
                            return Ok(Some(v));
                        }
                    }
                }
                Stmt::Verdict { decision, risk, .. } => {
                    let mut verdict = match decision {
                        Decision::Grant => Verdict::grant(),
                        Decision::Deny { message, details } => {
                            let msg = self.eval(message)?;
                            let Value::Str(msg) = msg else {
                                return Err(ExecError::type_error(
                                    message.pos,
                                    format!("denial message must be a string, got {}", msg.type_name()),
                                ));
                            };
                            let d = self.eval(details)?;
                            Verdict::deny(msg, to_details(&d, details.pos)?)
                        }
                    };
                    if let Some(risk) = risk {
                        let r = self.eval(risk)?;
                        let level = r.as_str().and_then(RiskLevel::parse).ok_or_else(|| {
                            ExecError::type_error(risk.pos, format!("risk must be a risk level string, got {r}"))
                        })?;
                        verdict = verdict.with_risk(level);
                    }
                    return Ok(Some(verdict));
                }
            }
        }
        Ok(None)
    }

    fn eval(&self, expr: &Expr) -> Result<Value, ExecError> {
        let pos = expr.pos;
        Ok(match &expr.kind {
            ExprKind::Str(s) => Value::Str(s.clone()),
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Var(name) => self
                .locals
                .get(name)
                .or_else(|| self.bindings.get(name))
                .cloned()
                .ok_or_else(|| ExecError::runtime(pos, format!("missing binding {name:?}")))?,
            ExprKind::Call { name, args } => {
                let (_, f) = self
                    .registry
                    .get(name)
                    .ok_or_else(|| ExecError::runtime(pos, format!("unknown function {name:?}")))?;
                let args = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                f(&args).map_err(|e| ExecError::from_call(pos, name, e))?
            }
            ExprKind::Field { base, field } => match self.eval(base)? {
                Value::Map(mut m) => m
                    .remove(field)
                    .ok_or_else(|| ExecError::runtime(pos, format!("no field {field:?}")))?,
                other => {
                    return Err(ExecError::type_error(
                        pos,
                        format!("cannot read field {field:?} of {}", other.type_name()),
                    ))
                }
            },
            ExprKind::Index { base, index } => {
                let b = self.eval(base)?;
                let i = self.eval(index)?;
                match (b, i) {
                    (Value::List(items), Value::Int(i)) => usize::try_from(i)
                        .ok()
                        .and_then(|i| items.into_iter().nth(i))
                        .ok_or_else(|| ExecError::runtime(pos, format!("index {i} out of range")))?,
                    (Value::Map(mut m), Value::Str(k)) => {
                        m.remove(&k).ok_or_else(|| ExecError::runtime(pos, format!("no key {k:?}")))?
                    }
                    (b, i) => {
                        return Err(ExecError::type_error(
                            pos,
                            format!("cannot index {} with {}", b.type_name(), i.type_name()),
                        ))
                    }
                }
            }
            ExprKind::List(items) => {
                Value::List(items.iter().map(|e| self.eval(e)).collect::<Result<_, _>>()?)
            }
            ExprKind::Map(entries) => Value::Map(
                entries
                    .iter()
                    .map(|(k, e)| Ok((k.clone(), self.eval(e)?)))
                    .collect::<Result<_, ExecError>>()?,
            ),
            ExprKind::Not(inner) => match self.eval(inner)? {
                Value::Bool(b) => Value::Bool(!b),
                other => return Err(ExecError::type_error(pos, format!("cannot negate {}", other.type_name()))),
            },
            ExprKind::Binary { op, lhs, rhs } => self.binary(*op, lhs, rhs, pos)?,
        })
    }

    fn binary(&self, op: BinOp, lhs: &Expr, rhs: &Expr, pos: Pos) -> Result<Value, ExecError> {
        if matches!(op, BinOp::And | BinOp::Or) {
            let bool_of = |e: &Expr| -> Result<bool, ExecError> {
                let v = self.eval(e)?;
                v.as_bool().ok_or_else(|| {
                    ExecError::type_error(e.pos, format!("`{}` needs bool operands, got {}", op.symbol(), v.type_name()))
                })
            };
            let l = bool_of(lhs)?;
            return Ok(Value::Bool(match op {
                BinOp::And => l && bool_of(rhs)?,
                _ => l || bool_of(rhs)?,
            }));
        }
        let l = self.eval(lhs)?;
        let r = self.eval(rhs)?;
        let ordering = match (&l, &r) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            _ => None,
        };
        Ok(Value::Bool(match op {
            BinOp::Eq => l == r,
            BinOp::Ne => l != r,
            _ => {
                let ord = ordering.ok_or_else(|| {
                    ExecError::type_error(
                        pos,
                        format!("cannot compare {} {} {}", l.type_name(), op.symbol(), r.type_name()),
                    )
                })?;
                match op {
                    BinOp::Lt => ord.is_lt(),
                    BinOp::Le => ord.is_le(),
                    BinOp::Gt => ord.is_gt(),
                    _ => ord.is_ge(),
                }
            }
        }))
    }
}

/// Denial details are either a `{db: [col]}` map or a list of rule ids.
fn to_details(v: &Value, pos: Pos) -> Result<DetailSet, ExecError> {
    match v {
        Value::Map(_) => v.to_resources().map(DetailSet::inaccessible).ok_or_else(|| {
            ExecError::type_error(pos, "details map must map database names to lists of column names")
        }),
        Value::List(items) => {
            let ids = items
                .iter()
                .map(|i| i.as_int().and_then(|n| u32::try_from(n).ok()).filter(|n| *n > 0))
                .collect::<Option<BTreeSet<u32>>>()
                .ok_or_else(|| ExecError::type_error(pos, "details list must hold positive rule ids"))?;
            Ok(DetailSet::rules(ids))
        }
        other => Err(ExecError::type_error(
            pos,
            format!("details must be a map or a list, got {}", other.type_name()),
        )),
    }
}
