//! `pulsebench train`: fit one model variant on a train partition, or fit a
//! fold ensemble and emit per-subject confidence intervals.

use std::path::PathBuf;

use clap::Args;
use pulsebench_core::dataset::load_dataset;
use pulsebench_core::io::fmt_f64;
use pulsebench_core::splits::build_folds;
use pulsebench_eval::{
    all_indices, build_examples, intervals_from_fold_predictions, predict, train, Example,
    TrainConfig,
};
use pulsebench_nn::{
    save_checkpoint, AdamConfig, Backbone, Model, ModelSpec, NormStats, Target,
};

use crate::config::{effective, prepare_out_dir, write_artifact, FileConfig, RunEcho};
use crate::errors::{CliError, Result};

const KEYS: [&str; 12] = [
    "backbone",
    "target",
    "demo",
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "weight_decay",
    "shuffle_seed",
    "folds",
];

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat key=value configuration file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subject demographics table for the train partition.
    #[arg(long)]
    manifest: PathBuf,
    /// Segment waveform + label table for the train partition.
    #[arg(long)]
    segments: PathBuf,
    /// Directory for model.ckpt and history.csv (or fold artifacts).
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Network family: lenet1d, xresnet18_1d, xresnet50_1d, inception1d, s4_1d.
    #[arg(long)]
    backbone: Option<String>,
    /// Regression target: sbp or dbp.
    #[arg(long)]
    target: Option<String>,
    /// Fuse age/sex/body-mass-index features with the waveform encoding.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    demo: Option<bool>,
    /// Parameter initialization seed (also seeds the fold assignment).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of passes over the train partition.
    #[arg(long)]
    epochs: Option<usize>,
    /// Segments per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Adam first-moment decay.
    #[arg(long)]
    beta1: Option<f64>,
    /// Adam second-moment decay.
    #[arg(long)]
    beta2: Option<f64>,
    /// Decoupled weight decay per step.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Seed for the per-epoch batch order.
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Train one model per fold and emit confidence intervals (0 = off).
    #[arg(long)]
    folds: Option<usize>,
    /// Demographics table scored by the fold ensemble (required with --folds).
    #[arg(long)]
    eval_manifest: Option<PathBuf>,
    /// Segment table scored by the fold ensemble (required with --folds).
    #[arg(long)]
    eval_segments: Option<PathBuf>,
}

fn required_string(flag: Option<String>, cfg: &FileConfig, key: &str) -> Result<String> {
    match flag {
        Some(v) => Ok(v),
        None => cfg
            .get::<String>(key)?
            .ok_or_else(|| CliError::usage(format!("--{key} is required"))),
    }
}

pub fn run(args: TrainArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    cfg.check_known(&KEYS)?;

    let backbone = Backbone::parse(&required_string(args.backbone, &cfg, "backbone")?)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let target = Target::parse(&required_string(args.target, &cfg, "target")?)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let demo = effective(args.demo, &cfg, "demo", false)?;
    let seed = effective(args.seed, &cfg, "seed", 0u64)?;
    let adam_defaults = AdamConfig::default();
    let train_cfg = TrainConfig {
        batch_size: effective(args.batch_size, &cfg, "batch_size", 32)?,
        epochs: effective(args.epochs, &cfg, "epochs", 100)?,
        optimizer: AdamConfig {
            lr: effective(args.lr, &cfg, "lr", adam_defaults.lr)?,
            beta1: effective(args.beta1, &cfg, "beta1", adam_defaults.beta1)?,
            beta2: effective(args.beta2, &cfg, "beta2", adam_defaults.beta2)?,
            weight_decay: effective(args.weight_decay, &cfg, "weight_decay", adam_defaults.weight_decay)?,
            epsilon: adam_defaults.epsilon,
        },
        shuffle_seed: effective(args.shuffle_seed, &cfg, "shuffle_seed", 0u64)?,
    };
    let folds = effective(args.folds, &cfg, "folds", 0usize)?;
    if folds == 1 {
        return Err(CliError::usage(
            "--folds needs at least 2 folds (0 disables)".to_string(),
        ));
    }
    if folds > 0 && (args.eval_manifest.is_none() || args.eval_segments.is_none()) {
        return Err(CliError::usage(
            "--folds needs --eval-manifest and --eval-segments".to_string(),
        ));
    }

    let ds = load_dataset(&args.manifest, &args.segments)?;
    let norm = if demo {
        NormStats::from_subjects(&ds.subjects)?
    } else {
        NormStats::identity()
    };
    let spec = ModelSpec {
        backbone,
        use_demographics: demo,
        target,
        input_length: ds.segment_length,
        seed,
    };
    spec.validate()?;
    let examples = build_examples(&ds, &all_indices(&ds), target, &norm, demo)?;

    prepare_out_dir(&args.out, args.force)?;
    let mut echo = RunEcho::new();
    echo.set("backbone", backbone);
    echo.set("target", target.code());
    echo.set("demo", demo);
    echo.set("seed", seed);
    echo.set("epochs", train_cfg.epochs);
    echo.set("batch_size", train_cfg.batch_size);
    echo.set("lr", fmt_f64(train_cfg.optimizer.lr));
    echo.set("beta1", fmt_f64(train_cfg.optimizer.beta1));
    echo.set("beta2", fmt_f64(train_cfg.optimizer.beta2));
    echo.set("weight_decay", fmt_f64(train_cfg.optimizer.weight_decay));
    echo.set("shuffle_seed", train_cfg.shuffle_seed);
    echo.set("folds", folds);
    echo.write(&args.out)?;

    if folds == 0 {
        let mut model = Model::new(spec, norm)?;
        let history = train(&mut model, &examples, &train_cfg)?;
        save_checkpoint(&model, &args.out.join("model.ckpt"))?;
        write_artifact(&args.out, "history.csv", &history_csv(&history))?;
        let last = history.last().copied().unwrap_or(f64::NAN);
        println!(
            "trained {} ({}, {}) on {} segments for {} epochs; final loss {}",
            backbone,
            if demo { "multimodal" } else { "ppg_only" },
            target.code(),
            examples.len(),
            train_cfg.epochs,
            fmt_f64(last)
        );
        return Ok(());
    }

    let (eval_manifest, eval_segments) = (
        args.eval_manifest.as_ref().expect("checked above"),
        args.eval_segments.as_ref().expect("checked above"),
    );
    let eval_ds = load_dataset(eval_manifest, eval_segments)?;
    if eval_ds.segment_length != ds.segment_length {
        return Err(CliError::data(format!(
            "eval segments are {} samples long but the model expects {}",
            eval_ds.segment_length, ds.segment_length
        )));
    }
    let eval_examples = build_examples(&eval_ds, &all_indices(&eval_ds), target, &norm, demo)?;
    if eval_examples.is_empty() {
        return Err(CliError::data("eval partition has no segments".to_string()));
    }

    let plan = build_folds(&ds, folds, seed)?;
    write_artifact(&args.out, "fold_plan.csv", &plan.to_string())?;

    let mut per_fold: Vec<Vec<f64>> = Vec::with_capacity(folds);
    for fold in 0..folds {
        let keep: Vec<Example> = examples
            .iter()
            .filter(|ex| plan.assignment.get(&ex.subject_id) != Some(&fold))
            .cloned()
            .collect();
        if keep.is_empty() {
            return Err(CliError::data(format!(
                "fold {fold} leaves no training segments"
            )));
        }
        let mut model = Model::new(spec.clone(), norm.clone())?;
        let history = train(&mut model, &keep, &train_cfg)
            .map_err(|e| prefix_fold(fold, e.into()))?;
        save_checkpoint(&model, &args.out.join(format!("fold_{fold}.ckpt")))?;
        write_artifact(&args.out, &format!("fold_{fold}_history.csv"), &history_csv(&history))?;
        let preds = predict(&model, &eval_examples).map_err(|e| prefix_fold(fold, e.into()))?;
        per_fold.push(preds);
    }

    let intervals = intervals_from_fold_predictions(&per_fold)?;
    let mut ci = String::from("subject_id,y_true,mean,lo,hi\n");
    for (ex, interval) in eval_examples.iter().zip(&intervals) {
        ci.push_str(&format!(
            "{},{},{},{},{}\n",
            ex.subject_id,
            fmt_f64(f64::from(ex.label)),
            fmt_f64(interval.mean),
            fmt_f64(interval.lo),
            fmt_f64(interval.hi),
        ));
    }
    write_artifact(&args.out, "ci.csv", &ci)?;

    println!(
        "trained {folds} folds on {} segments; wrote intervals for {} eval segments",
        examples.len(),
        eval_examples.len()
    );
    Ok(())
}

fn history_csv(history: &[f64]) -> String {
    let mut text = String::from("epoch,loss\n");
    for (epoch, loss) in history.iter().enumerate() {
        text.push_str(&format!("{epoch},{}\n", fmt_f64(*loss)));
    }
    text
}

fn prefix_fold(fold: usize, e: CliError) -> CliError {
    match e {
        CliError::Usage(m) => CliError::Usage(format!("fold {fold} failed: {m}")),
        CliError::Data(m) => CliError::Data(format!("fold {fold} failed: {m}")),
        CliError::Numeric(m) => CliError::Numeric(format!("fold {fold} failed: {m}")),
    }
}
