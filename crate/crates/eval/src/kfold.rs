//! Subject-level k-fold retraining and pointwise confidence intervals.

use pulsebench_core::splits::FoldPlan;
use pulsebench_nn::{Model, ModelSpec, NormStats};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::metrics::Interval;
use crate::train::{predict, train, TrainConfig};

/// Two-sided 95% normal multiplier.
pub const Z_95: f64 = 1.96;

/// Trains `plan.k` models from scratch — fold `i` withholding the training
/// subjects assigned to fold `i` — and evaluates each on `eval_data`.
///
/// Returns one interval per evaluation example: the mean prediction across
/// folds, bracketed by `mean ± z·sd` where `sd` is the population spread of
/// the fold predictions. When every fold sees identical training data the
/// runs coincide bit-for-bit and the intervals collapse to zero width.
pub fn kfold_confidence(
    spec: &ModelSpec,
    norm: NormStats,
    train_data: &[Example],
    plan: &FoldPlan,
    cfg: &TrainConfig,
    eval_data: &[Example],
) -> Result<Vec<Interval>> {
    cfg.validate()?;
    if plan.k < 2 {
        return Err(Error::InvalidConfig(format!(
            "cross-validation needs at least 2 folds, got {}",
            plan.k
        )));
    }
    if eval_data.is_empty() {
        return Err(Error::DataMismatch("evaluation set is empty".into()));
    }
    for ex in train_data {
        if !plan.assignment.contains_key(&ex.subject_id) {
            return Err(Error::DataMismatch(format!(
                "training subject {} is not in the fold plan",
                ex.subject_id
            )));
        }
    }

    let mut per_fold: Vec<Vec<f64>> = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let wrap = |source: Error| Error::Fold {
            fold,
            source: Box::new(source),
        };
        let keep: Vec<Example> = train_data
            .iter()
            .filter(|ex| plan.assignment[&ex.subject_id] != fold)
            .cloned()
            .collect();
        if keep.is_empty() {
            return Err(wrap(Error::DataMismatch(
                "withholding this fold leaves no training data".into(),
            )));
        }
        let mut model = Model::new(spec.clone(), norm).map_err(|e| wrap(e.into()))?;
        train(&mut model, &keep, cfg).map_err(wrap)?;
        per_fold.push(predict(&model, eval_data).map_err(wrap)?);
    }
    intervals_from_fold_predictions(&per_fold)
}

/// Collapses per-fold prediction vectors (one per fold, aligned across the
/// same evaluation examples) into pointwise `mean ± 1.96·sd` intervals.
pub fn intervals_from_fold_predictions(per_fold: &[Vec<f64>]) -> Result<Vec<Interval>> {
    if per_fold.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need predictions from at least 2 folds, got {}",
            per_fold.len()
        )));
    }
    let n = per_fold[0].len();
    if per_fold.iter().any(|p| p.len() != n) {
        return Err(Error::DataMismatch(
            "fold prediction vectors have differing lengths".into(),
        ));
    }
    let k = per_fold.len() as f64;
    Ok((0..n)
        .map(|i| {
            let mean = per_fold.iter().map(|p| p[i]).sum::<f64>() / k;
            let var = per_fold
                .iter()
                .map(|p| (p[i] - mean) * (p[i] - mean))
                .sum::<f64>()
                / k;
            let half = Z_95 * var.sqrt();
            Interval {
                mean,
                lo: mean - half,
                hi: mean + half,
            }
        })
        .collect())
}
