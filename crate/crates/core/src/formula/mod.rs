//! Formula syntax: lexing, parsing and rendering.
//!
//! The grammar is documented in `docs/grammar.md`.

pub mod expr;
mod lexer;
mod parser;
mod render;

pub use expr::{
    column_letters, column_number, BinaryOp, Cached, CellAddr, CellPos, CmpOp, Expr, SdfRef,
    UnaryOp,
};
pub use parser::{error_literal, parse_expr, parse_formula};
pub use render::{render_body, render_expr, render_number, same_modulo_cached};

/// A syntax error with a 1-based line and column.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub message: String,
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

impl ParseError {
    pub(crate) fn at(full: &str, base: usize, offset: usize, message: &str) -> ParseError {
        let offset = (base + offset).min(full.len());
        let before = &full[..floor_char_boundary(full, offset)];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ParseError {
            message: message.to_string(),
            offset,
            line,
            column,
        }
    }
}

fn floor_char_boundary(s: &str, mut i: usize) -> usize {
    while i > 0 && !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}
