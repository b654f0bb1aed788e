use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Input data failed validation.
    Data,
    /// A computation failed (non-finite values, unreachable targets, I/O).
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("invalid BIO sequence at position {position}: {reason}")]
    InvalidBio { position: usize, reason: String },

    #[error("overlapping spans {first:?} and {second:?}")]
    OverlappingSpans {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("no vector for id {id} in member {member}")]
    MissingVector { id: String, member: String },

    #[error("short form {0:?} not in dictionary")]
    UnknownShortForm(String),

    #[error("no retrieval candidates for short form {0:?}")]
    NoCandidates(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{0}")]
    Unreachable(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::NonFinite(_) | Error::Unreachable(_) => ErrorKind::Runtime,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidRecord {
            id: id.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
