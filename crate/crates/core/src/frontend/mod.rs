//! Mini-C frontend: lexing, parsing, resolution and pretty-printing.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod resolve;

use thiserror::Error;

use ast::{Program, Span};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{span}: lex error: {message}")]
    Lex { span: Span, message: String },
    #[error("{span}: parse error: expected {}, found {found}", expected.join(" or "))]
    Parse { span: Span, expected: Vec<String>, found: String },
    #[error("{span}: undeclared identifier `{name}`")]
    UndeclaredIdentifier { name: String, span: Span },
    #[error("{span}: type mismatch: {message}")]
    TypeMismatch { span: Span, message: String },
    #[error("{span}: `{name}` is already declared")]
    Redeclared { name: String, span: Span },
    #[error("{span}: duplicate ISR for vector `{name}`")]
    DuplicateIsr { name: String, span: Span },
    #[error("missing entry function `{0}()`")]
    MissingEntry(String),
    #[error("recursion is not supported: {}", cycle.join(" -> "))]
    Recursion { cycle: Vec<String> },
    #[error("{span}: unsupported construct: {message}")]
    Unsupported { span: Span, message: String },
}

impl FrontendError {
    pub fn span(&self) -> Option<Span> {
        match self {
            FrontendError::Lex { span, .. }
            | FrontendError::Parse { span, .. }
            | FrontendError::UndeclaredIdentifier { span, .. }
            | FrontendError::TypeMismatch { span, .. }
            | FrontendError::Redeclared { span, .. }
            | FrontendError::DuplicateIsr { span, .. }
            | FrontendError::Unsupported { span, .. } => Some(*span),
            FrontendError::MissingEntry(_) | FrontendError::Recursion { .. } => None,
        }
    }
}

/// Tokenize, parse and resolve one translation unit.
pub fn parse_source(source: &str) -> Result<Program, FrontendError> {
    let tokens = lexer::tokenize(source)?;
    let program = parser::parse_program(&tokens)?;
    resolve::resolve_symbols(program)
}
