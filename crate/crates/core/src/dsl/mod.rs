//! Frontend for the declaration constructs layered on top of C/JavaScript:
//! `jdata` logger/broadcaster declarations, `jcond` predicates, and gated
//! `jsync`/`jasync` function signatures. Function bodies and any other host
//! language text are kept as opaque strings.

mod ast;
pub mod corpus;
mod eval;
mod lexer;
mod parser;
mod print;
mod validate;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use ast::*;
pub use eval::{evaluate_condition, evaluate_gate, latest_of_latest, EvalContext, EvalError, Lookup, Readiness, StaticContext, Value};
pub use parser::{parse_program, parse_program_named};
pub use print::{pretty_print, print_expr, print_gate};
pub use validate::{validate_program, Diagnostic, DiagnosticKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail")]
pub enum ParseErrorKind {
    Syntax,
    UnknownKind(String),
    UnknownLevel(String),
    UnknownType(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: Span,
    pub message: String,
}

impl ParseError {
    pub fn new(kind: ParseErrorKind, span: Span, message: impl Into<String>) -> Self {
        ParseError {
            kind,
            span,
            message: message.into(),
        }
    }

    pub fn syntax(span: Span, message: impl Into<String>) -> Self {
        ParseError::new(ParseErrorKind::Syntax, span, message)
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

#[cfg(test)]
mod tests;
