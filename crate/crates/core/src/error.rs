use std::io;

use thiserror::Error;

/// Errors produced by the decoding engine, verifiers and harness.
#[derive(Debug, Error)]
pub enum LadrError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("replay exhausted: {0}")]
    ReplayExhausted(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl LadrError {
    pub(crate) fn io(path: impl Into<String>, source: io::Error) -> Self {
        LadrError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, LadrError>;
