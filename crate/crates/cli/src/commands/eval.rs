//! `pulsebench eval`: score a trained checkpoint on the two held-out
//! protocols of a split directory.

use std::path::PathBuf;

use clap::Args;
use pulsebench_core::dataset::load_dataset;
use pulsebench_eval::{
    aami_gate, all_indices, build_examples, compute_metrics, predict, reference_for,
    save_predictions, PredictionRecord, PredictionSet, Protocol,
};
use pulsebench_nn::{load_checkpoint, Backbone};
use serde_json::json;

use crate::config::{prepare_out_dir, write_artifact, RunEcho};
use crate::errors::{CliError, Result};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split directory holding cal_based_* and cal_free_* dataset pairs.
    #[arg(long)]
    split: PathBuf,
    /// Directory for pred_cal_based.csv, pred_cal_free.csv, metrics.json.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Fail unless the checkpoint holds this network family.
    #[arg(long)]
    backbone: Option<String>,
    /// Attach the bundled full-scale reference metrics and deltas.
    #[arg(long)]
    reference: bool,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    if let Some(expected) = &args.backbone {
        let expected = Backbone::parse(expected).map_err(|e| CliError::usage(e.to_string()))?;
        if model.spec.backbone != expected {
            return Err(CliError::data(format!(
                "checkpoint holds {} but {} was expected",
                model.spec.backbone, expected
            )));
        }
    }

    prepare_out_dir(&args.out, args.force)?;
    let mut results = Vec::new();
    for protocol in [Protocol::CalBased, Protocol::CalFree] {
        let name = protocol.code();
        let ds = load_dataset(
            &args.split.join(format!("{name}_manifest.csv")),
            &args.split.join(format!("{name}_segments.csv")),
        )?;
        if ds.segment_length != model.spec.input_length {
            return Err(CliError::data(format!(
                "{name} segments are {} samples long but the model expects {}",
                ds.segment_length, model.spec.input_length
            )));
        }
        let examples = build_examples(
            &ds,
            &all_indices(&ds),
            model.spec.target,
            &model.norm,
            model.spec.use_demographics,
        )?;
        let preds = predict(&model, &examples)?;
        let set = PredictionSet {
            target: model.spec.target,
            protocol,
            records: examples
                .iter()
                .zip(&preds)
                .map(|(ex, &y_pred)| PredictionRecord {
                    subject_id: ex.subject_id.clone(),
                    y_true: f64::from(ex.label),
                    y_pred,
                })
                .collect(),
        };
        save_predictions(&set, &args.out.join(format!("pred_{name}.csv")))?;
        let metrics = compute_metrics(&set)?;
        let verdict = aami_gate(&metrics);
        let reference = if args.reference {
            reference_for(
                model.spec.backbone,
                model.spec.use_demographics,
                protocol,
                model.spec.target,
            )
        } else {
            None
        };
        let mae_delta = reference.as_ref().map(|r| metrics.mae - r.mae);
        results.push(json!({
            "protocol": name,
            "metrics": metrics,
            "aami": verdict,
            "reference": reference
                .map(|r| json!({"mae": r.mae, "sd": r.sd, "r2": r.r2}))
                .unwrap_or(serde_json::Value::Null),
            "mae_delta": mae_delta,
        }));
        println!(
            "{name}: n {} mae {:.3} sd {:.3} aami {}",
            metrics.n,
            metrics.mae,
            metrics.sd,
            if verdict.pass { "pass" } else { "fail" }
        );
    }

    let doc = json!({
        "model": model.spec.backbone.code(),
        "multimodal": model.spec.use_demographics,
        "target": model.spec.target.code(),
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("metrics document serializes");
    text.push('\n');
    write_artifact(&args.out, "metrics.json", &text)?;

    let mut echo = RunEcho::new();
    echo.set("reference", args.reference);
    echo.write(&args.out)?;
    Ok(())
}
