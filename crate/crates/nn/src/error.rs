//! Error type shared by the autodiff graph, model zoo, and checkpoint I/O.

use std::path::{Path, PathBuf};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {msg}")]
    ShapeMismatch { msg: String },

    #[error("batch of {batch} is too small for batch statistics (need >= 2)")]
    DegenerateBatch { batch: usize },

    #[error("prediction pair is empty")]
    EmptyPair,

    #[error("backward requires a scalar output, got {len} values")]
    NonScalarOutput { len: usize },

    #[error("unstable state space: {msg}")]
    UnstableState { msg: String },

    #[error("unsupported input length: {msg}")]
    UnsupportedLength { msg: String },

    #[error("invalid model spec: {msg}")]
    InvalidSpec { msg: String },

    #[error("subject {subject_id} lacks the BMI required by the demographic encoder")]
    MissingBmi { subject_id: String },

    #[error("malformed checkpoint: {msg}")]
    MalformedCheckpoint { msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch { msg: msg.into() }
    }

    pub fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec { msg: msg.into() }
    }

    pub fn length(msg: impl Into<String>) -> Self {
        Error::UnsupportedLength { msg: msg.into() }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}
