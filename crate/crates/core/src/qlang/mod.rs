//! Declarative queries over the operator algebra.
//!
//! ```text
//! query  := SELECT (STAR | INT) FROM IDENT '(' IDENT ')'
//!           [WHERE window] [(JOIN | LEFT JOIN) '(' query ')']
//! window := IDENT | 'rect' '(' INT ',' INT ',' INT ',' INT ')'
//! IDENT  := [A-Za-z_][A-Za-z0-9_']*
//! ```
//!
//! `select l` selects stage `l`, `where` projects, `join` joins and
//! `left join` anti-joins. Rectangles are inclusive grid coordinates.

mod ast;
mod lexer;
mod lower;
mod parser;

pub use ast::{print, Ident, JoinClause, JoinKind, QueryAst, Span, Target, WindowTerm};
pub use lexer::{is_identifier, tokenize, Token, TokenKind};
pub use lower::{compile, lower, Binding, Bindings};
pub use parser::{parse, parse_query};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::ValidationError;

/// A validation error tied to the query clause that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocatedError {
    #[serde(flatten)]
    pub error: ValidationError,
    pub offset: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("lex error at offset {offset}: {message}")]
    Lex { offset: usize, message: String },
    #[error("syntax error at offset {offset}: found {found}, expected {}", expected.join(" or "))]
    Parse {
        offset: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("unbound identifier '{name}' at offset {offset}")]
    Unbound { name: String, offset: usize },
    #[error("'{name}' at offset {offset} is bound to a {found}, expected a {expected}")]
    KindMismatch {
        name: String,
        expected: &'static str,
        found: &'static str,
        offset: usize,
    },
    #[error("window at offset {offset}: {message}")]
    Window { offset: usize, message: String },
    #[error("{}", describe_invalid(.0))]
    Invalid(Vec<LocatedError>),
}

fn describe_invalid(errors: &[LocatedError]) -> String {
    errors
        .iter()
        .map(|e| format!("offset {}: {}", e.offset, e.error))
        .collect::<Vec<_>>()
        .join("; ")
}

impl QueryError {
    /// Offset of the first reported problem.
    pub fn offset(&self) -> usize {
        match self {
            QueryError::Lex { offset, .. }
            | QueryError::Parse { offset, .. }
            | QueryError::Unbound { offset, .. }
            | QueryError::KindMismatch { offset, .. }
            | QueryError::Window { offset, .. } => *offset,
            QueryError::Invalid(errors) => errors.first().map_or(0, |e| e.offset),
        }
    }
}
