use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The input data violates an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The problem size exceeds the solver's documented cap.
    #[error("{solver} supports at most {cap} points, got {got}")]
    Capacity {
        solver: &'static str,
        cap: usize,
        got: usize,
    },

    /// Malformed bytes or text in an input file.
    #[error("parse error in {path} at byte {offset}: {reason}")]
    Parse {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    /// An operation produced nothing where a non-empty result is required.
    #[error("empty result: {0}")]
    EmptyResult(String),

    /// Gradient descent blew up.
    #[error("optimization diverged at step {step}: loss {loss:.6e} exceeds {limit:.6e}")]
    Divergence { step: usize, loss: f64, limit: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the environment (files, pipes) rather than
    /// by bad arguments or data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
