//! Error type shared across the crate.

use std::fmt;
use std::io;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Operand shapes do not line up for an op; names both shapes.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Input outside the documented domain of an op (e.g. log of a nonpositive value).
    Domain(String),
    /// An operation that requires at least one element got none.
    EmptyInput(&'static str),
    /// Token id outside the vocabulary, or a malformed vocabulary.
    Vocab(String),
    /// Malformed input file; `line` is 1-based.
    Parse { line: usize, msg: String },
    /// Checkpoint file problems: bad magic, version or vocabulary mismatch, truncation.
    Checkpoint(String),
    /// Statistically degenerate input (zero vector, zero variance).
    Degenerate(String),
    /// A gradient went NaN/Inf during training; names the parameter.
    NonFinite { param: String },
    /// Invalid configuration value.
    Config(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::Vocab(msg) => write!(f, "vocabulary error: {msg}"),
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::NonFinite { param } => {
                write!(f, "non-finite gradient in parameter '{param}'")
            }
            Error::Config(msg) => write!(f, "invalid config: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
