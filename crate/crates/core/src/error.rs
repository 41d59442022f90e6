use std::path::PathBuf;

use thiserror::Error;

use crate::llm::parse::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config field `{field}` = {value} is outside the legal interval {legal}")]
    ConfigRange {
        field: &'static str,
        value: String,
        legal: &'static str,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("prompt: {0}")]
    Prompt(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("provider `{provider}` failed after {attempts} attempt(s): {message}")]
    Transport {
        provider: String,
        attempts: usize,
        message: String,
    },

    #[error("provider `{provider}` broke its contract: {message}")]
    Contract { provider: String, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("index: {0}")]
    Index(String),

    #[error("query ids are not aligned between systems: {0}")]
    Misaligned(String),

    #[error("reward model: {0}")]
    Qerm(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
