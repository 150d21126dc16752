use std::fmt;

use serde::{Deserialize, Serialize};

use crate::topology::NodeLevel;

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramDecl {
    pub app_name: String,
    pub data_decls: Vec<DataDecl>,
    pub cond_decls: Vec<CondDecl>,
    pub func_decls: Vec<FuncDecl>,
    /// Top-level C/JS text outside the added constructs, kept verbatim.
    pub opaque: Vec<OpaqueItem>,
}

impl ProgramDecl {
    pub fn empty(app_name: &str) -> Self {
        ProgramDecl {
            app_name: app_name.to_string(),
            data_decls: Vec::new(),
            cond_decls: Vec::new(),
            func_decls: Vec::new(),
            opaque: Vec::new(),
        }
    }

    pub fn data(&self, name: &str) -> Option<&DataDecl> {
        self.data_decls.iter().find(|d| d.name == name)
    }

    pub fn cond(&self, name: &str) -> Option<&CondDecl> {
        self.cond_decls.iter().find(|c| c.name == name)
    }

    pub fn func(&self, name: &str) -> Option<&FuncDecl> {
        self.func_decls.iter().find(|f| f.name == name)
    }

    /// Copy with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> ProgramDecl {
        let mut p = self.clone();
        for d in &mut p.data_decls {
            d.span = Span::default();
        }
        for c in &mut p.cond_decls {
            c.span = Span::default();
            c.expr.clear_spans();
        }
        for f in &mut p.func_decls {
            f.span = Span::default();
            if let Some(g) = &mut f.gate {
                g.clear_spans();
            }
            for prm in &mut f.params {
                prm.span = Span::default();
            }
        }
        for o in &mut p.opaque {
            o.span = Span::default();
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    Int,
    Double,
    String,
}

impl ScalarType {
    pub fn parse(s: &str) -> Option<ScalarType> {
        match s {
            "int" => Some(ScalarType::Int),
            "double" => Some(ScalarType::Double),
            "string" => Some(ScalarType::String),
            _ => None,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ScalarType::Int => "int",
            ScalarType::Double => "double",
            ScalarType::String => "string",
        }
    }

    pub fn value_type(self) -> ValueType {
        match self {
            ScalarType::Int | ScalarType::Double => ValueType::Number,
            ScalarType::String => ValueType::String,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Number,
    String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataKind {
    Logger {
        level: NodeLevel,
        /// False when the declaration omitted the level and it defaulted.
        explicit_level: bool,
    },
    Broadcaster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDecl {
    pub name: String,
    pub scalar_type: ScalarType,
    pub kind: DataKind,
    pub span: Span,
}

impl DataDecl {
    pub fn logger_level(&self) -> Option<NodeLevel> {
        match self.kind {
            DataKind::Logger { level, .. } => Some(level),
            DataKind::Broadcaster => None,
        }
    }

    pub fn is_broadcaster(&self) -> bool {
        self.kind == DataKind::Broadcaster
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondDecl {
    pub name: String,
    pub expr: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn apply<T: PartialOrd + ?Sized>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operand", rename_all = "snake_case")]
pub enum Operand {
    Number { value: f64, span: Span },
    Str { value: String, span: Span },
    Var { name: String, span: Span },
    SysType { span: Span },
    SysRank { span: Span },
}

impl Operand {
    pub fn span(&self) -> Span {
        match self {
            Operand::Number { span, .. }
            | Operand::Str { span, .. }
            | Operand::Var { span, .. }
            | Operand::SysType { span }
            | Operand::SysRank { span } => *span,
        }
    }

    fn clear_span(&mut self) {
        match self {
            Operand::Number { span, .. }
            | Operand::Str { span, .. }
            | Operand::Var { span, .. }
            | Operand::SysType { span }
            | Operand::SysRank { span } => *span = Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "snake_case")]
pub enum Expr {
    Or {
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    And {
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    Compare {
        op: CmpOp,
        lhs: Operand,
        rhs: Operand,
        span: Span,
    },
    /// An operand used where a boolean is expected; rejected by validation.
    Bare {
        operand: Operand,
    },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Or { span, .. } | Expr::And { span, .. } | Expr::Compare { span, .. } => *span,
            Expr::Bare { operand } => operand.span(),
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        let mut out = Vec::new();
        self.collect_operands(&mut out);
        out
    }

    fn collect_operands<'a>(&'a self, out: &mut Vec<&'a Operand>) {
        match self {
            Expr::Or { lhs, rhs, .. } | Expr::And { lhs, rhs, .. } => {
                lhs.collect_operands(out);
                rhs.collect_operands(out);
            }
            Expr::Compare { lhs, rhs, .. } => {
                out.push(lhs);
                out.push(rhs);
            }
            Expr::Bare { operand } => out.push(operand),
        }
    }

    fn clear_spans(&mut self) {
        match self {
            Expr::Or { lhs, rhs, span } | Expr::And { lhs, rhs, span } => {
                *span = Span::default();
                lhs.clear_spans();
                rhs.clear_spans();
            }
            Expr::Compare { lhs, rhs, span, .. } => {
                *span = Span::default();
                lhs.clear_span();
                rhs.clear_span();
            }
            Expr::Bare { operand } => operand.clear_span(),
        }
    }
}

/// Boolean combination of condition names attached to a function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum GateExpr {
    Cond { name: String, span: Span },
    Or { lhs: Box<GateExpr>, rhs: Box<GateExpr> },
    And { lhs: Box<GateExpr>, rhs: Box<GateExpr> },
}

impl GateExpr {
    pub fn cond_names(&self) -> Vec<(&str, Span)> {
        match self {
            GateExpr::Cond { name, span } => vec![(name.as_str(), *span)],
            GateExpr::Or { lhs, rhs } | GateExpr::And { lhs, rhs } => {
                let mut v = lhs.cond_names();
                v.extend(rhs.cond_names());
                v
            }
        }
    }

    fn clear_spans(&mut self) {
        match self {
            GateExpr::Cond { span, .. } => *span = Span::default(),
            GateExpr::Or { lhs, rhs } | GateExpr::And { lhs, rhs } => {
                lhs.clear_spans();
                rhs.clear_spans();
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Jsync,
    Jasync,
}

impl CallKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CallKind::Jsync => "jsync",
            CallKind::Jasync => "jasync",
        }
    }
}

/// Where the gate braces appeared: `jasync {g} function f` or `jasync function {g} f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePlacement {
    BeforeFunction,
    AfterFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuncDecl {
    pub name: String,
    pub call_kind: CallKind,
    pub gate: Option<GateExpr>,
    pub gate_placement: GatePlacement,
    /// `None` when declared with the `function` keyword.
    pub return_type: Option<String>,
    pub params: Vec<Param>,
    pub has_param_list: bool,
    /// Opaque body text between the outer braces, trimmed.
    pub body: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpaqueItem {
    pub text: String,
    pub span: Span,
}
