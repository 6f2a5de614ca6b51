use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("user `{0}` is not filter-bubble affected")]
    NotAffected(String),

    #[error("no unvisited candidate from `{0}`")]
    NoCandidate(String),

    #[error("feedback for prompt `{got}` but queue head is `{expected}`")]
    PromptMismatch { expected: String, got: String },

    #[error("prompt queue is empty")]
    EmptyQueue,

    #[error("generator error: {0}")]
    Generator(String),

    #[error("invariant violated at step {step} for user `{user}`: {message}")]
    Invariant {
        step: usize,
        user: String,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
