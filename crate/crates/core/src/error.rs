use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed annotation in {record}: {reason}")]
    MalformedAnnotation { record: String, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("validation error for {item}: {reason}")]
    Validation { item: String, reason: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("unmatched class labels: {}", .0.join(", "))]
    Mapping(Vec<String>),

    #[error("unknown catalog entry {id:?}; registered: {}", .registered.join(", "))]
    Catalog { id: String, registered: Vec<String> },

    #[error("backend initialization failed: {0}")]
    Initialization(String),

    #[error("inference failed on frame {source_id}: {reason}")]
    Inference { source_id: String, reason: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tensor backend error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl std::fmt::Display, actual: impl std::fmt::Display) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
