//! Training loop, evaluation metrics, and benchmark reporting for the
//! blood-pressure estimation models.
//!
//! The pieces compose in file order: [`data`] flattens a curated dataset
//! into examples, [`train`] fits a model with mini-batch Adam, [`metrics`]
//! scores prediction sets (MAE, bias, error spread, R², the device-standard
//! accuracy gate, residual histograms, per-patient series), [`kfold`] turns
//! repeated retraining into pointwise confidence intervals, [`files`]
//! persists predictions as plain text, and [`report`] lines everything up
//! against the bundled full-scale reference results.

pub mod data;
pub mod error;
pub mod files;
pub mod kfold;
pub mod metrics;
pub mod report;
pub mod train;

pub use data::{all_indices, build_examples, Example};
pub use error::{Error, Result};
pub use files::{load_predictions, save_predictions};
pub use kfold::{intervals_from_fold_predictions, kfold_confidence, Z_95};
pub use metrics::{
    aami_gate, compute_metrics, r_squared, residual_histogram, top_patients_report, AamiVerdict,
    Histogram, Interval, MetricBundle, PatientSeries, PredictionRecord, PredictionSet, Protocol,
    SeriesPoint, ME_LIMIT_MMHG, SD_LIMIT_MMHG,
};
pub use report::{benchmark_report, reference_for, BenchmarkReport, ReferenceMetrics, RunResult};
pub use train::{predict, train, TrainConfig};
