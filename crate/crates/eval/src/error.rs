use std::path::PathBuf;

/// Errors raised while training models or evaluating predictions.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A metric was requested over an empty prediction set.
    #[error("prediction set is empty")]
    EmptyPredictions,

    /// The coefficient of determination is undefined because every true
    /// label is identical.
    #[error("r-squared is undefined: true labels have zero variance")]
    ZeroVariance,

    /// Training produced a non-finite loss and was aborted.
    #[error(
        "non-finite loss ({loss}) at epoch {epoch}, step {step}; \
         batch subjects: {subjects}"
    )]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        loss: f64,
        subjects: String,
    },

    /// Inference produced a non-finite value.
    #[error("non-finite prediction for subject {subject_id}")]
    NonFinitePrediction { subject_id: String },

    /// A per-patient report needs more distinct subjects than the
    /// prediction set contains.
    #[error("need at least {need} distinct subjects, found {have}")]
    TooFewSubjects { have: usize, need: usize },

    /// A configuration value is out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Supplied examples do not line up with the model or the fold plan.
    #[error("data mismatch: {0}")]
    DataMismatch(String),

    /// A cross-validation fold failed; the index says which one.
    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    /// A prediction file on disk does not follow the expected layout.
    #[error("malformed prediction file {path}: {msg}")]
    MalformedFile { path: PathBuf, msg: String },

    /// Reading or writing a file failed.
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An error bubbled up from the network layer.
    #[error(transparent)]
    Nn(#[from] pulsebench_nn::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
