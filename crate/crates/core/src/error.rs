use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library. Every variant is a data or configuration
/// problem; the CLI maps all of them to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id {id:?} (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("corpus is empty after validation")]
    EmptyCorpus,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty model: no tokens in any stream")]
    EmptyModel,

    #[error("background model is missing term {0:?} present in the foreground model")]
    BackgroundMissingTerm(String),

    #[error("models do not share the same vocabulary")]
    VocabularyMismatch,

    #[error("insufficient sample: need at least 2 observations per side, got {0} and {1}")]
    InsufficientSample(usize, usize),

    #[error("cohort has no documents in any slice")]
    EmptyCohort,

    #[error("dimension mismatch for {id:?}: expected {expected}, got {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite embedding component for {0:?}")]
    NonFiniteEmbedding(String),

    #[error("document {0:?} has no embedding")]
    MissingEmbedding(String),

    #[error("document {0:?} not found in corpus")]
    UnknownDocument(String),

    #[error("year {year} of {id:?} lies outside the sliced range")]
    OutsideSlices { id: String, year: i32 },

    #[error("embedding service rejected credentials (HTTP {0})")]
    AuthFailure(u16),

    #[error("embedding request failed after {attempts} attempts: {message}")]
    RetriesExhausted { attempts: usize, message: String },

    #[error("embedding response carried {got} vectors for a batch of {expected}")]
    BatchLengthMismatch { expected: usize, got: usize },

    #[error("http error: {0}")]
    Http(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<bincode::Error> for Error {
    fn from(e: bincode::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
