//! Benchmark report assembly: measured metrics beside stored reference
//! results, device-standard verdicts, and fusion-versus-unimodal marks.

use pulsebench_nn::{Backbone, Target};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::metrics::{aami_gate, AamiVerdict, MetricBundle, Protocol};

/// Reference numbers for one model variant under one protocol and target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceMetrics {
    pub mae: f64,
    pub sd: f64,
    pub r2: f64,
}

struct ReferenceRow {
    backbone: Backbone,
    multimodal: bool,
    // (mae, sd, r2) for (cal_based, cal_free) × (sbp, dbp).
    cal_sbp: (f64, f64, f64),
    cal_dbp: (f64, f64, f64),
    free_sbp: (f64, f64, f64),
    free_dbp: (f64, f64, f64),
}

/// Full-scale results bundled with the toolkit so small reruns can be
/// compared against a known-good baseline. All values are mmHg except R².
const REFERENCE: [ReferenceRow; 10] = [
    ReferenceRow {
        backbone: Backbone::XResNet50,
        multimodal: false,
        cal_sbp: (5.39, 6.98, 0.39),
        cal_dbp: (3.31, 4.38, 0.38),
        free_sbp: (6.62, 8.03, 0.17),
        free_dbp: (4.32, 5.27, 0.06),
    },
    ReferenceRow {
        backbone: Backbone::XResNet50,
        multimodal: true,
        cal_sbp: (5.35, 6.90, 0.40),
        cal_dbp: (3.24, 4.25, 0.42),
        free_sbp: (6.70, 8.10, 0.15),
        free_dbp: (4.32, 5.27, 0.07),
    },
    ReferenceRow {
        backbone: Backbone::XResNet18,
        multimodal: false,
        cal_sbp: (5.57, 7.05, 0.37),
        cal_dbp: (3.43, 4.46, 0.36),
        free_sbp: (6.60, 7.98, 0.18),
        free_dbp: (4.28, 5.22, 0.09),
    },
    ReferenceRow {
        backbone: Backbone::XResNet18,
        multimodal: true,
        cal_sbp: (5.38, 6.97, 0.39),
        cal_dbp: (3.25, 4.26, 0.41),
        free_sbp: (6.45, 7.80, 0.21),
        free_dbp: (4.32, 5.29, 0.07),
    },
    ReferenceRow {
        backbone: Backbone::Inception1d,
        multimodal: false,
        cal_sbp: (6.01, 7.41, 0.31),
        cal_dbp: (3.77, 4.73, 0.28),
        free_sbp: (6.39, 7.84, 0.21),
        free_dbp: (4.31, 5.16, 0.05),
    },
    ReferenceRow {
        backbone: Backbone::Inception1d,
        multimodal: true,
        cal_sbp: (4.75, 6.12, 0.53),
        cal_dbp: (2.90, 3.84, 0.52),
        free_sbp: (6.34, 7.85, 0.21),
        free_dbp: (4.34, 5.34, 0.00),
    },
    ReferenceRow {
        backbone: Backbone::S4,
        multimodal: false,
        cal_sbp: (6.83, 8.18, 0.10),
        cal_dbp: (4.57, 5.09, 0.03),
        free_sbp: (6.82, 8.14, 0.11),
        free_dbp: (4.53, 5.29, 0.02),
    },
    ReferenceRow {
        backbone: Backbone::S4,
        multimodal: true,
        cal_sbp: (7.10, 7.88, 0.07),
        cal_dbp: (4.64, 4.89, 0.00),
        free_sbp: (6.97, 8.06, 0.05),
        free_dbp: (4.67, 5.33, -0.04),
    },
    ReferenceRow {
        backbone: Backbone::LeNet1d,
        multimodal: false,
        cal_sbp: (6.64, 8.14, 0.17),
        cal_dbp: (4.10, 5.10, 0.16),
        free_sbp: (6.67, 8.02, 0.17),
        free_dbp: (4.34, 5.28, 0.06),
    },
    ReferenceRow {
        backbone: Backbone::LeNet1d,
        multimodal: true,
        cal_sbp: (6.76, 8.24, 0.15),
        cal_dbp: (4.12, 5.12, 0.15),
        free_sbp: (6.61, 7.98, 0.18),
        free_dbp: (4.32, 5.25, 0.09),
    },
];

/// Looks up the bundled reference metrics for a model variant, protocol,
/// and target. Returns `None` for combinations outside the shipped table.
pub fn reference_for(
    backbone: Backbone,
    multimodal: bool,
    protocol: Protocol,
    target: Target,
) -> Option<ReferenceMetrics> {
    REFERENCE
        .iter()
        .find(|row| row.backbone == backbone && row.multimodal == multimodal)
        .map(|row| {
            let (mae, sd, r2) = match (protocol, target) {
                (Protocol::CalBased, Target::Sbp) => row.cal_sbp,
                (Protocol::CalBased, Target::Dbp) => row.cal_dbp,
                (Protocol::CalFree, Target::Sbp) => row.free_sbp,
                (Protocol::CalFree, Target::Dbp) => row.free_dbp,
            };
            ReferenceMetrics { mae, sd, r2 }
        })
}

/// Measured metrics for one trained model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub backbone: Backbone,
    pub multimodal: bool,
    pub protocol: Protocol,
    pub target: Target,
    pub metrics: MetricBundle,
}

/// One line of the benchmark report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub backbone: Backbone,
    pub multimodal: bool,
    pub protocol: Protocol,
    pub target: Target,
    pub metrics: MetricBundle,
    pub aami: AamiVerdict,
    pub reference: Option<ReferenceMetrics>,
    /// `metrics.mae - reference.mae`; negative beats the baseline.
    pub mae_delta: Option<f64>,
    /// Whether this variant's MAE beats the opposite variant of the same
    /// backbone on the same protocol and target, when both were run.
    pub beats_counterpart: Option<bool>,
}

/// Assembled benchmark comparison, ordered deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub entries: Vec<ReportEntry>,
}

fn backbone_rank(b: Backbone) -> usize {
    Backbone::ALL.iter().position(|x| *x == b).unwrap_or(usize::MAX)
}

fn sort_key(e: &ReportEntry) -> (usize, bool, bool, bool) {
    (
        backbone_rank(e.backbone),
        e.multimodal,
        e.protocol == Protocol::CalFree,
        e.target == Target::Dbp,
    )
}

/// Builds the benchmark report for a batch of run results: each entry gets
/// its device-standard verdict, the bundled reference numbers (when the
/// variant is in the shipped table) with the MAE delta against them, and a
/// marker for whether it outperformed the opposite-modality counterpart.
pub fn benchmark_report(results: &[RunResult]) -> Result<BenchmarkReport> {
    if results.is_empty() {
        return Err(Error::DataMismatch("no run results to report".into()));
    }
    for r in results {
        let dup = results
            .iter()
            .filter(|o| {
                o.backbone == r.backbone
                    && o.multimodal == r.multimodal
                    && o.protocol == r.protocol
                    && o.target == r.target
            })
            .count();
        if dup > 1 {
            return Err(Error::DataMismatch(format!(
                "duplicate result for {} multimodal={} {} {}",
                r.backbone.code(),
                r.multimodal,
                r.protocol.code(),
                r.target.code()
            )));
        }
    }

    let mut entries: Vec<ReportEntry> = results
        .iter()
        .map(|r| {
            let reference = reference_for(r.backbone, r.multimodal, r.protocol, r.target);
            let counterpart = results.iter().find(|o| {
                o.backbone == r.backbone
                    && o.multimodal != r.multimodal
                    && o.protocol == r.protocol
                    && o.target == r.target
            });
            ReportEntry {
                backbone: r.backbone,
                multimodal: r.multimodal,
                protocol: r.protocol,
                target: r.target,
                metrics: r.metrics,
                aami: aami_gate(&r.metrics),
                reference,
                mae_delta: reference.map(|f| r.metrics.mae - f.mae),
                beats_counterpart: counterpart.map(|o| r.metrics.mae < o.metrics.mae),
            }
        })
        .collect();
    entries.sort_by_key(sort_key);
    Ok(BenchmarkReport { entries })
}

impl BenchmarkReport {
    /// Structured rendering; keys are emitted in sorted order, so equal
    /// reports serialize to identical bytes.
    pub fn to_json(&self) -> String {
        let entries: Vec<Value> = self
            .entries
            .iter()
            .map(|e| {
                json!({
                    "model": e.backbone.code(),
                    "multimodal": e.multimodal,
                    "protocol": e.protocol.code(),
                    "target": e.target.code(),
                    "metrics": {
                        "mae": e.metrics.mae,
                        "me": e.metrics.me,
                        "sd": e.metrics.sd,
                        "r2": e.metrics.r2,
                        "n": e.metrics.n,
                    },
                    "aami": {
                        "me_ok": e.aami.me_ok,
                        "sd_ok": e.aami.sd_ok,
                        "pass": e.aami.pass,
                    },
                    "reference": e.reference.map(|f| {
                        json!({"mae": f.mae, "sd": f.sd, "r2": f.r2})
                    }),
                    "mae_delta": e.mae_delta,
                    "beats_counterpart": e.beats_counterpart,
                })
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&json!({ "results": entries }))
            .expect("report serialization cannot fail");
        out.push('\n');
        out
    }

    /// Fixed-width text table with one row per entry.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<[String; 10]> = vec![[
            "model".into(),
            "variant".into(),
            "protocol".into(),
            "target".into(),
            "mae".into(),
            "sd".into(),
            "r2".into(),
            "aami".into(),
            "ref_mae".into(),
            "mae_delta".into(),
        ]];
        for e in &self.entries {
            let fusion_mark = match e.beats_counterpart {
                Some(true) => " *",
                _ => "",
            };
            rows.push([
                e.backbone.code().to_string(),
                (if e.multimodal { "multimodal" } else { "ppg_only" }).to_string(),
                e.protocol.code().to_string(),
                e.target.code().to_string(),
                format!("{:.3}{fusion_mark}", e.metrics.mae),
                format!("{:.3}", e.metrics.sd),
                e.metrics
                    .r2
                    .map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}")),
                (if e.aami.pass { "pass" } else { "fail" }).to_string(),
                e.reference
                    .map_or_else(|| "-".to_string(), |f| format!("{:.2}", f.mae)),
                e.mae_delta
                    .map_or_else(|| "-".to_string(), |d| format!("{d:+.3}")),
            ]);
        }

        let mut width = [0usize; 10];
        for row in &rows {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        for row in &rows {
            let mut line = String::new();
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                line.push_str(cell);
                if i + 1 < row.len() {
                    for _ in cell.len()..width[i] {
                        line.push(' ');
                    }
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out.push_str("* lower mean absolute error than the opposite-modality variant\n");
        out
    }
}
