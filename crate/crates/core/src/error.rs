use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the data layer. Violations that are *reported* rather
/// than raised (see `dataset::validate_dataset`) do not appear here.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: segment references unknown subject {subject_id:?}")]
    UnknownSubject {
        path: PathBuf,
        line: usize,
        subject_id: String,
    },
    #[error("{path}:{line}: segment has {got} samples, header declares {expected}")]
    LengthMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("fewer than 3 beats found")]
    NoBeats,
    #[error("non-physiological rate: {msg}")]
    NonPhysiologicalRate { msg: String },
    #[error("too few subjects: have {have}, need {need}")]
    TooFewSubjects { have: usize, need: usize },
    #[error("degenerate fraction: {msg}")]
    DegenerateFraction { msg: String },
    #[error("invalid configuration: {msg}")]
    InvalidConfig { msg: String },
    #[error("{path}: {source}")]
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

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::MalformedLine {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
