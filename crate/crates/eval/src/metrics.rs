//! Regression metrics, device-standard gating, and per-patient summaries.

use std::collections::BTreeMap;

use pulsebench_nn::Target;
use serde::Serialize;

use crate::error::{Error, Result};

/// Device-standard limit on the magnitude of the mean error, in mmHg.
/// The comparison is strict: a mean error of exactly 5 fails.
pub const ME_LIMIT_MMHG: f64 = 5.0;

/// Device-standard limit on the error standard deviation, in mmHg.
/// The comparison is strict: a standard deviation of exactly 8 fails.
pub const SD_LIMIT_MMHG: f64 = 8.0;

/// Evaluation protocol a prediction set was produced under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Test subjects also appear in training (with different segments).
    CalBased,
    /// Test subjects are entirely unseen during training.
    CalFree,
}

impl Protocol {
    pub fn code(&self) -> &'static str {
        match self {
            Protocol::CalBased => "cal_based",
            Protocol::CalFree => "cal_free",
        }
    }

    pub fn parse(s: &str) -> Result<Protocol> {
        match s {
            "cal_based" => Ok(Protocol::CalBased),
            "cal_free" => Ok(Protocol::CalFree),
            _ => Err(Error::DataMismatch(format!("unknown protocol {s:?}"))),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// One prediction alongside its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub subject_id: String,
    pub y_true: f64,
    pub y_pred: f64,
}

/// A labelled batch of predictions for one target under one protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub target: Target,
    pub protocol: Protocol,
    pub records: Vec<PredictionRecord>,
}

impl PredictionSet {
    /// Residuals `y_true - y_pred`, in record order.
    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y_true - r.y_pred).collect()
    }
}

/// Summary statistics of one prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricBundle {
    /// Mean absolute error, mmHg.
    pub mae: f64,
    /// Mean error (bias), mmHg. Positive means the model under-predicts.
    pub me: f64,
    /// Population standard deviation of the errors, mmHg.
    pub sd: f64,
    /// Coefficient of determination; `None` when the true labels have zero
    /// variance, which leaves it undefined.
    pub r2: Option<f64>,
    /// Number of predictions summarized.
    pub n: usize,
}

fn check_finite(records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        if !r.y_true.is_finite() || !r.y_pred.is_finite() {
            return Err(Error::DataMismatch(format!(
                "non-finite value in prediction record for subject {}",
                r.subject_id
            )));
        }
    }
    Ok(())
}

/// Computes MAE, mean error, error standard deviation, and R² over a
/// prediction set. Errors are `y_true - y_pred`; the standard deviation is
/// the population form (divide by n).
pub fn compute_metrics(set: &PredictionSet) -> Result<MetricBundle> {
    if set.records.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    check_finite(&set.records)?;
    let n = set.records.len() as f64;
    let errors = set.residuals();

    let me = errors.iter().sum::<f64>() / n;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - me) * (e - me)).sum::<f64>() / n;
    let sd = var.sqrt();
    let r2 = match r_squared(set) {
        Ok(v) => Some(v),
        Err(Error::ZeroVariance) => None,
        Err(e) => return Err(e),
    };

    Ok(MetricBundle {
        mae,
        me,
        sd,
        r2,
        n: set.records.len(),
    })
}

/// Coefficient of determination `1 - SS_res / SS_tot`. Fails with
/// [`Error::ZeroVariance`] when every true label is identical.
pub fn r_squared(set: &PredictionSet) -> Result<f64> {
    if set.records.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    check_finite(&set.records)?;
    let n = set.records.len() as f64;
    let mean_true = set.records.iter().map(|r| r.y_true).sum::<f64>() / n;
    let ss_tot: f64 = set
        .records
        .iter()
        .map(|r| (r.y_true - mean_true) * (r.y_true - mean_true))
        .sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = set
        .records
        .iter()
        .map(|r| (r.y_true - r.y_pred) * (r.y_true - r.y_pred))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Outcome of the device-standard accuracy gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AamiVerdict {
    /// `|me| < 5` mmHg, strictly.
    pub me_ok: bool,
    /// `sd < 8` mmHg, strictly.
    pub sd_ok: bool,
    /// Both conditions hold.
    pub pass: bool,
}

/// Applies the accuracy gate to a metric bundle. Both comparisons are
/// strict, so boundary values (|ME| = 5, SD = 8) fail.
pub fn aami_gate(m: &MetricBundle) -> AamiVerdict {
    let me_ok = m.me.abs() < ME_LIMIT_MMHG;
    let sd_ok = m.sd < SD_LIMIT_MMHG;
    AamiVerdict {
        me_ok,
        sd_ok,
        pass: me_ok && sd_ok,
    }
}

/// Histogram of residuals over a symmetric range centred on zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` boundaries from `-range` to `range`.
    pub edges: Vec<f64>,
    /// Residual count per bin; sums to the number of records.
    pub counts: Vec<usize>,
}

/// Bins the residuals of `set` into `bins` equal-width bins spanning
/// `[-m, m]` where `m = max |residual|` (or 1 when all residuals are
/// zero, so the layout stays well-formed). Bins are half-open on the
/// right except the last, which also takes residuals equal to `m`.
pub fn residual_histogram(set: &PredictionSet, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if set.records.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    check_finite(&set.records)?;
    let errors = set.residuals();
    let mut range = errors.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    if range == 0.0 {
        range = 1.0;
    }
    let width = 2.0 * range / bins as f64;
    // Interpolated form so the first and last edges are exactly ±range.
    let edges: Vec<f64> = (0..=bins)
        .map(|i| range * (2.0 * i as f64 / bins as f64 - 1.0))
        .collect();
    let mut counts = vec![0usize; bins];
    for e in &errors {
        let idx = (((e + range) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// True/predicted pair for one segment of one subject, optionally with a
/// cross-validation interval around the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub y_true: f64,
    pub y_pred: f64,
    pub interval: Option<Interval>,
}

/// Per-segment series for one subject, in record order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientSeries {
    pub subject_id: String,
    pub points: Vec<SeriesPoint>,
}

/// Pointwise confidence interval around a mean prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

/// Selects the `k` subjects with the most records and returns their
/// true/predicted series. Ties on record count break toward the
/// lexicographically smaller subject id. When `intervals` is given it must
/// align one-to-one with `set.records`.
pub fn top_patients_report(
    set: &PredictionSet,
    intervals: Option<&[Interval]>,
    k: usize,
) -> Result<Vec<PatientSeries>> {
    if let Some(iv) = intervals {
        if iv.len() != set.records.len() {
            return Err(Error::DataMismatch(format!(
                "{} intervals for {} records",
                iv.len(),
                set.records.len()
            )));
        }
    }
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in set.records.iter().enumerate() {
        by_subject.entry(r.subject_id.as_str()).or_default().push(i);
    }
    if by_subject.len() < k {
        return Err(Error::TooFewSubjects {
            have: by_subject.len(),
            need: k,
        });
    }
    // BTreeMap iteration is id-ascending, and the sort below is stable, so
    // equal counts resolve to the smaller subject id.
    let mut ranked: Vec<(&str, Vec<usize>)> =
        by_subject.into_iter().map(|(id, v)| (id, v)).collect();
    ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()));
    ranked.truncate(k);

    Ok(ranked
        .into_iter()
        .map(|(id, idxs)| PatientSeries {
            subject_id: id.to_string(),
            points: idxs
                .into_iter()
                .map(|i| SeriesPoint {
                    y_true: set.records[i].y_true,
                    y_pred: set.records[i].y_pred,
                    interval: intervals.map(|iv| iv[i]),
                })
                .collect(),
        })
        .collect())
}
