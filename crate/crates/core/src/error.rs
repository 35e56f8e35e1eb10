use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the decoding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("size error in {path}: expected {expected} values, found {found}")]
    Size {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("non-finite {what} value at (row {row}, index {index})")]
    NonFinite {
        what: &'static str,
        row: usize,
        index: usize,
    },

    #[error("series too short: {what} needs at least {needed}, got {got}")]
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("rate error: {0}")]
    Rate(String),

    #[error("unsupported sampling rate {0} Hz (need at least 400 Hz)")]
    UnsupportedRate(u32),

    #[error("filter design error: {0}")]
    Design(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("empty feature set")]
    EmptyFeatures,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("feature selection found no informative column")]
    SelectionFailed,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
