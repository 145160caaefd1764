use std::path::PathBuf;

use crate::domain::UserId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("allocation length {actual} does not match grid size {expected}")]
    AllocationLength { expected: usize, actual: usize },

    #[error("allocation entry {index} references unknown user {user}")]
    UnknownUser { index: usize, user: UserId },

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("exhaustive search over {candidates} candidates exceeds cap {cap}")]
    SearchCapExceeded { candidates: f64, cap: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero system bandwidth")]
    ZeroBandwidth,

    #[error("{0}")]
    Invalid(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("weights file: {0}")]
    Weights(String),

    #[error("policy `{0}` needs trained weights")]
    MissingWeights(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Invalid(_) | Error::MissingWeights(_)
        )
    }
}
