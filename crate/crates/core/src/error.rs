use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: dimension mismatch, expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },

    #[error("empty embedding refused")]
    EmptyEmbedding,

    #[error("empty input")]
    EmptyInput,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error("truncated stream while reading {0}")]
    Truncated(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("out of vocabulary: {0:?}")]
    OutOfVocabulary(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("gradient check failed on {parameter}: relative deviation {deviation:.3e}")]
    GradientCheck { parameter: String, deviation: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
