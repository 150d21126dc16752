use std::fmt::Write;

use super::ast::*;
use crate::topology::NodeLevel;

/// Renders a program back to source. Reparsing the output yields a
/// structurally identical AST (spans aside).
pub fn pretty_print(prog: &ProgramDecl) -> String {
    let mut out = String::new();
    if !prog.data_decls.is_empty() {
        out.push_str("jdata {\n");
        for d in &prog.data_decls {
            let kind = match d.kind {
                DataKind::Broadcaster => "broadcaster".to_string(),
                DataKind::Logger { explicit_level: false, .. } => "logger".to_string(),
                DataKind::Logger { level, .. } => format!("logger({})", level_word(level)),
            };
            let _ = writeln!(out, "    {} {} as {};", d.scalar_type.keyword(), d.name, kind);
        }
        out.push_str("}\n");
    }
    if !prog.cond_decls.is_empty() {
        out.push_str("jcond {\n");
        for c in &prog.cond_decls {
            let _ = writeln!(out, "    {}: {};", c.name, print_expr(&c.expr));
        }
        out.push_str("}\n");
    }
    for item in &prog.opaque {
        out.push_str(&item.text);
        out.push('\n');
    }
    for f in &prog.func_decls {
        out.push_str(f.call_kind.keyword());
        let gate = f.gate.as_ref().map(|g| format!(" {{{}}}", print_gate(g, 0)));
        if f.gate_placement == GatePlacement::BeforeFunction {
            if let Some(g) = &gate {
                out.push_str(g);
            }
        }
        out.push(' ');
        out.push_str(f.return_type.as_deref().unwrap_or("function"));
        if f.gate_placement == GatePlacement::AfterFunction {
            if let Some(g) = &gate {
                out.push_str(g);
            }
        }
        out.push(' ');
        out.push_str(&f.name);
        if f.has_param_list {
            let params: Vec<String> = f
                .params
                .iter()
                .map(|p| match &p.ty {
                    Some(t) => format!("{t} {}", p.name),
                    None => p.name.clone(),
                })
                .collect();
            let _ = write!(out, "({})", params.join(", "));
        }
        if f.body.is_empty() {
            out.push_str(" {\n}\n");
        } else {
            let _ = write!(out, " {{\n{}\n}}\n", f.body);
        }
    }
    out
}

fn level_word(level: NodeLevel) -> &'static str {
    level.sys_type()
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Or { .. } => 1,
        Expr::And { .. } => 2,
        Expr::Compare { .. } | Expr::Bare { .. } => 3,
    }
}

pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Or { lhs, rhs, .. } => format!("{} || {}", wrap(lhs, 1, false), wrap(rhs, 1, true)),
        Expr::And { lhs, rhs, .. } => format!("{} && {}", wrap(lhs, 2, false), wrap(rhs, 2, true)),
        Expr::Compare { op, lhs, rhs, .. } => {
            format!("{} {} {}", print_operand(lhs), op.symbol(), print_operand(rhs))
        }
        Expr::Bare { operand } => print_operand(operand),
    }
}

fn wrap(e: &Expr, parent: u8, right: bool) -> String {
    let p = prec(e);
    if p < parent || (right && p == parent) {
        format!("({})", print_expr(e))
    } else {
        print_expr(e)
    }
}

pub fn print_operand(o: &Operand) -> String {
    match o {
        Operand::Number { value, .. } => format!("{value}"),
        Operand::Str { value, .. } => format!("\"{value}\""),
        Operand::Var { name, .. } => name.clone(),
        Operand::SysType { .. } => "sys.type".into(),
        Operand::SysRank { .. } => "sys.rank".into(),
    }
}

pub fn print_gate(g: &GateExpr, parent: u8) -> String {
    let (p, s) = match g {
        GateExpr::Cond { name, .. } => return name.clone(),
        GateExpr::Or { lhs, rhs } => (1, format!("{}||{}", print_gate(lhs, 1), print_gate_right(rhs, 1))),
        GateExpr::And { lhs, rhs } => (2, format!("{}&&{}", print_gate(lhs, 2), print_gate_right(rhs, 2))),
    };
    if p < parent {
        format!("({s})")
    } else {
        s
    }
}

fn print_gate_right(g: &GateExpr, parent: u8) -> String {
    match g {
        GateExpr::Cond { .. } => print_gate(g, parent),
        GateExpr::Or { .. } if parent >= 1 => format!("({})", print_gate(g, 0)),
        GateExpr::And { .. } if parent >= 2 => format!("({})", print_gate(g, 0)),
        _ => print_gate(g, parent),
    }
}
