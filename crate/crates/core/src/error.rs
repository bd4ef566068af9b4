//! Crate-wide error types.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} ({locator}): {message}")]
    Parse {
        path: PathBuf,
        locator: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown split: {0}")]
    UnknownSplit(String),

    #[error("unknown annotator: {0}")]
    UnknownAnnotator(String),

    #[error(
        "token budget too small: header plus target needs {needed} tokens \
         ({headroom} of them reserved headroom) but budget is {budget}"
    )]
    BudgetTooSmall {
        needed: usize,
        headroom: usize,
        budget: usize,
    },

    #[error("degenerate distribution: valid label mass {mass:e} is below the floor")]
    DegenerateDistribution { mass: f64 },

    #[error("missing predictions for {count} gold items (first: {first})")]
    MissingPredictions { count: usize, first: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(
        path: impl Into<PathBuf>,
        locator: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            locator: locator.into(),
            message: message.into(),
        }
    }
}

/// Errors raised by completion backends.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("backend lacks required capability: {0}")]
    Capability(String),

    #[error("candidate {candidate:?} not scorable as a continuation: {message}")]
    Candidate { candidate: String, message: String },

    #[error("backend configuration error: {0}")]
    Config(String),
}
