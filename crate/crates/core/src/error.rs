use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum FlecsError {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {field}: {msg}")]
    Config { field: String, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} of size {size} exceeds the configured cap of {cap}; {advice}")]
    TooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
        advice: &'static str,
    },

    #[error("corrupt compressed payload: {0}")]
    CorruptPayload(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FlecsError {
    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        FlecsError::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = FlecsError> = std::result::Result<T, E>;
