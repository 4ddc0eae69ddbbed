//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by tensor ops, layers, the data pipeline, metrics and IO.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up (wrong rank, mismatched axes, bad kernel size).
    #[error("shape error: {0}")]
    Shape(String),

    /// A caller-supplied value is out of contract (bad label index, empty dataset, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A serialized artifact (weights file, image) is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// A text file (manifest CSV, confusion-matrix CSV) failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The network configuration cannot be realized (input too small for the stride chain).
    #[error("config error: {0}")]
    Config(String),

    /// An operation was invoked out of order.
    #[error("state error: {0}")]
    State(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
