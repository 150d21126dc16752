use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::ast::*;
use crate::topology::NodeLevel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "name")]
pub enum DiagnosticKind {
    DuplicateData(String),
    DuplicateCond(String),
    DuplicateFunc(String),
    UnresolvedCond(String),
    UnresolvedVar(String),
    TypeMismatch,
    NotBoolean,
    UnknownSysType(String),
    MissingReturnType(String),
    UnexpectedReturnType(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

/// Returns every problem found; empty means the program is well formed.
pub fn validate_program(prog: &ProgramDecl) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut seen = BTreeSet::new();
    for d in &prog.data_decls {
        if !seen.insert(d.name.as_str()) {
            out.push(Diagnostic {
                kind: DiagnosticKind::DuplicateData(d.name.clone()),
                span: d.span,
                message: format!("jdata variable `{}` declared more than once", d.name),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for c in &prog.cond_decls {
        if !seen.insert(c.name.as_str()) {
            out.push(Diagnostic {
                kind: DiagnosticKind::DuplicateCond(c.name.clone()),
                span: c.span,
                message: format!("condition `{}` declared more than once", c.name),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for f in &prog.func_decls {
        if !seen.insert(f.name.as_str()) {
            out.push(Diagnostic {
                kind: DiagnosticKind::DuplicateFunc(f.name.clone()),
                span: f.span,
                message: format!("function `{}` declared more than once", f.name),
            });
        }
    }

    for c in &prog.cond_decls {
        check_expr(prog, &c.expr, &mut out);
    }

    for f in &prog.func_decls {
        if let Some(g) = &f.gate {
            for (name, span) in g.cond_names() {
                if prog.cond(name).is_none() {
                    out.push(Diagnostic {
                        kind: DiagnosticKind::UnresolvedCond(name.to_string()),
                        span,
                        message: format!("gate of `{}` references undeclared condition `{name}`", f.name),
                    });
                }
            }
        }
        match (f.call_kind, f.return_type.as_deref()) {
            (CallKind::Jsync, None) => out.push(Diagnostic {
                kind: DiagnosticKind::MissingReturnType(f.name.clone()),
                span: f.span,
                message: format!("jsync function `{}` must declare a return type", f.name),
            }),
            (CallKind::Jasync, Some(t)) if t != "void" => out.push(Diagnostic {
                kind: DiagnosticKind::UnexpectedReturnType(f.name.clone()),
                span: f.span,
                message: format!("jasync function `{}` cannot return `{t}`", f.name),
            }),
            _ => {}
        }
    }

    out.sort_by_key(|d| d.span);
    out
}

fn operand_type(prog: &ProgramDecl, op: &Operand, out: &mut Vec<Diagnostic>) -> Option<ValueType> {
    match op {
        Operand::Number { .. } | Operand::SysRank { .. } => Some(ValueType::Number),
        Operand::Str { .. } | Operand::SysType { .. } => Some(ValueType::String),
        Operand::Var { name, span } => match prog.data(name) {
            Some(d) => Some(d.scalar_type.value_type()),
            None => {
                out.push(Diagnostic {
                    kind: DiagnosticKind::UnresolvedVar(name.clone()),
                    span: *span,
                    message: format!("condition references undeclared variable `{name}`"),
                });
                None
            }
        },
    }
}

fn check_expr(prog: &ProgramDecl, e: &Expr, out: &mut Vec<Diagnostic>) {
    match e {
        Expr::Or { lhs, rhs, .. } | Expr::And { lhs, rhs, .. } => {
            check_expr(prog, lhs, out);
            check_expr(prog, rhs, out);
        }
        Expr::Bare { operand } => {
            operand_type(prog, operand, out);
            out.push(Diagnostic {
                kind: DiagnosticKind::NotBoolean,
                span: operand.span(),
                message: "expected a comparison".into(),
            });
        }
        Expr::Compare { lhs, rhs, span, .. } => {
            let lt = operand_type(prog, lhs, out);
            let rt = operand_type(prog, rhs, out);
            if let (Some(a), Some(b)) = (lt, rt) {
                if a != b {
                    out.push(Diagnostic {
                        kind: DiagnosticKind::TypeMismatch,
                        span: *span,
                        message: format!("cannot compare {a:?} with {b:?}").to_lowercase(),
                    });
                }
            }
            for (this, other) in [(lhs, rhs), (rhs, lhs)] {
                if let (Operand::SysType { .. }, Operand::Str { value, span }) = (this, other) {
                    if NodeLevel::parse(value).is_none() {
                        out.push(Diagnostic {
                            kind: DiagnosticKind::UnknownSysType(value.clone()),
                            span: *span,
                            message: format!("`{value}` is not a node type (cloud, fog, device)"),
                        });
                    }
                }
            }
        }
    }
}
