use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use crate::topology::NodeLevel;

/// A runtime data value carried by loggers, broadcasters, flows and calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Str(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            Value::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            Value::Num(_) => None,
        }
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Num(_) => ValueType::Number,
            Value::Str(_) => ValueType::String,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Num(v as f64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

/// What a node knows about a data variable when a condition is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Lookup {
    Value(Value),
    /// A broadcaster with no delivered value at this node.
    Undelivered,
    /// A logger with no records visible at this node; comparisons on it are false.
    NoData,
    /// The variable does not exist in this context.
    Absent,
}

pub trait EvalContext {
    fn sys_type(&self) -> NodeLevel;
    fn sys_rank(&self) -> i64;
    fn lookup(&self, var: &str) -> Lookup;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Readiness {
    Ready(bool),
    /// Waiting on the named broadcaster.
    Blocked(String),
}

impl Readiness {
    pub fn is_true(&self) -> bool {
        *self == Readiness::Ready(true)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("variable `{0}` is not available in this context")]
    UnknownVariable(String),
    #[error("condition `{0}` is not declared")]
    UnknownCond(String),
    #[error("type mismatch at {0}")]
    TypeMismatch(Span),
    #[error("non-boolean operand at {0}")]
    NotBoolean(Span),
}

enum Resolved {
    Val(Value),
    Blocked(String),
    NoData,
}

fn resolve(op: &Operand, ctx: &dyn EvalContext) -> Result<Resolved, EvalError> {
    Ok(match op {
        Operand::Number { value, .. } => Resolved::Val(Value::Num(*value)),
        Operand::Str { value, .. } => Resolved::Val(Value::Str(value.clone())),
        Operand::SysRank { .. } => Resolved::Val(Value::Num(ctx.sys_rank() as f64)),
        Operand::SysType { .. } => Resolved::Val(Value::Str(ctx.sys_type().sys_type().to_string())),
        Operand::Var { name, .. } => match ctx.lookup(name) {
            Lookup::Value(v) => Resolved::Val(v),
            Lookup::Undelivered => Resolved::Blocked(name.clone()),
            Lookup::NoData => Resolved::NoData,
            Lookup::Absent => return Err(EvalError::UnknownVariable(name.clone())),
        },
    })
}

/// `"dev"` is accepted as an alias of `"device"` when compared with `sys.type`.
fn normalize_sys_type(op: &Operand, v: Value, other: &Operand) -> Value {
    match (other, &v) {
        (Operand::SysType { .. }, Value::Str(s)) if !matches!(op, Operand::SysType { .. }) => match NodeLevel::parse(s) {
            Some(level) => Value::Str(level.sys_type().to_string()),
            None => v,
        },
        _ => v,
    }
}

fn compare(op: CmpOp, lhs: &Operand, rhs: &Operand, span: Span, ctx: &dyn EvalContext) -> Result<Readiness, EvalError> {
    let l = resolve(lhs, ctx)?;
    let r = resolve(rhs, ctx)?;
    let (l, r) = match (l, r) {
        (Resolved::Blocked(v), _) | (_, Resolved::Blocked(v)) => return Ok(Readiness::Blocked(v)),
        (Resolved::NoData, _) | (_, Resolved::NoData) => return Ok(Readiness::Ready(false)),
        (Resolved::Val(a), Resolved::Val(b)) => (normalize_sys_type(lhs, a, rhs), normalize_sys_type(rhs, b, lhs)),
    };
    match (&l, &r) {
        (Value::Num(a), Value::Num(b)) => Ok(Readiness::Ready(op.apply(a, b))),
        (Value::Str(a), Value::Str(b)) => Ok(Readiness::Ready(op.apply(a.as_str(), b.as_str()))),
        _ => Err(EvalError::TypeMismatch(span)),
    }
}

/// Three-valued evaluation: `false && Blocked` and `Blocked && false` are
/// `Ready(false)`, `true || Blocked` is `Ready(true)`, otherwise a blocked
/// operand blocks the whole expression.
pub fn evaluate_condition(expr: &Expr, ctx: &dyn EvalContext) -> Result<Readiness, EvalError> {
    match expr {
        Expr::Compare { op, lhs, rhs, span } => compare(*op, lhs, rhs, *span, ctx),
        Expr::Bare { operand } => Err(EvalError::NotBoolean(operand.span())),
        Expr::And { lhs, rhs, .. } => {
            let l = evaluate_condition(lhs, ctx)?;
            if l == Readiness::Ready(false) {
                return Ok(l);
            }
            let r = evaluate_condition(rhs, ctx)?;
            Ok(and3(l, r))
        }
        Expr::Or { lhs, rhs, .. } => {
            let l = evaluate_condition(lhs, ctx)?;
            if l == Readiness::Ready(true) {
                return Ok(l);
            }
            let r = evaluate_condition(rhs, ctx)?;
            Ok(or3(l, r))
        }
    }
}

fn and3(l: Readiness, r: Readiness) -> Readiness {
    match (l, r) {
        (Readiness::Ready(true), r) => r,
        (_, Readiness::Ready(false)) => Readiness::Ready(false),
        (Readiness::Blocked(v), _) => Readiness::Blocked(v),
        (Readiness::Ready(false), _) => Readiness::Ready(false),
    }
}

fn or3(l: Readiness, r: Readiness) -> Readiness {
    match (l, r) {
        (Readiness::Ready(false), r) => r,
        (_, Readiness::Ready(true)) => Readiness::Ready(true),
        (Readiness::Blocked(v), _) => Readiness::Blocked(v),
        (Readiness::Ready(true), _) => Readiness::Ready(true),
    }
}

/// Evaluates a function gate by evaluating each referenced condition.
pub fn evaluate_gate(gate: &GateExpr, prog: &ProgramDecl, ctx: &dyn EvalContext) -> Result<Readiness, EvalError> {
    match gate {
        GateExpr::Cond { name, .. } => {
            let cond = prog.cond(name).ok_or_else(|| EvalError::UnknownCond(name.clone()))?;
            evaluate_condition(&cond.expr, ctx)
        }
        GateExpr::And { lhs, rhs } => {
            let l = evaluate_gate(lhs, prog, ctx)?;
            if l == Readiness::Ready(false) {
                return Ok(l);
            }
            Ok(and3(l, evaluate_gate(rhs, prog, ctx)?))
        }
        GateExpr::Or { lhs, rhs } => {
            let l = evaluate_gate(lhs, prog, ctx)?;
            if l == Readiness::Ready(true) {
                return Ok(l);
            }
            Ok(or3(l, evaluate_gate(rhs, prog, ctx)?))
        }
    }
}

/// A plain in-memory context, handy for tests and tooling.
#[derive(Debug, Clone)]
pub struct StaticContext {
    pub sys_type: NodeLevel,
    pub sys_rank: i64,
    pub vars: std::collections::BTreeMap<String, Lookup>,
}

impl StaticContext {
    pub fn new(sys_type: NodeLevel, sys_rank: i64) -> Self {
        StaticContext {
            sys_type,
            sys_rank,
            vars: Default::default(),
        }
    }

    pub fn with(mut self, var: &str, lookup: Lookup) -> Self {
        self.vars.insert(var.to_string(), lookup);
        self
    }

    pub fn with_value(self, var: &str, v: impl Into<Value>) -> Self {
        self.with(var, Lookup::Value(v.into()))
    }
}

impl EvalContext for StaticContext {
    fn sys_type(&self) -> NodeLevel {
        self.sys_type
    }

    fn sys_rank(&self) -> i64 {
        self.sys_rank
    }

    fn lookup(&self, var: &str) -> Lookup {
        self.vars.get(var).cloned().unwrap_or(Lookup::Absent)
    }
}

/// Latest value across per-source streams: the most recent of each source's
/// most recent record. Ties on timestamp resolve to the later entry.
pub fn latest_of_latest<'a, I>(per_source_latest: I) -> Option<&'a Value>
where
    I: IntoIterator<Item = (f64, &'a Value)>,
{
    let mut best: Option<(f64, &Value)> = None;
    for (t, v) in per_source_latest {
        if best.is_none_or(|(bt, _)| t >= bt) {
            best = Some((t, v));
        }
    }
    best.map(|(_, v)| v)
}
