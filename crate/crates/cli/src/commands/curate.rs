//! `pulsebench curate`: relabel from arterial waveforms (optional), screen
//! signal quality, and restrict to the normotensive cohort.

use std::path::PathBuf;

use clap::Args;
use pulsebench_core::curation::{
    apply_cohort_filter, derive_bp_labels, filter_quality, CohortCriteria, QualityThresholds,
    DEFAULT_MAX_RATE_BPM, DEFAULT_MIN_RATE_BPM,
};
use pulsebench_core::dataset::{load_dataset, save_dataset};
use pulsebench_core::io::fmt_f64;
use pulsebench_core::synth::load_abp;
use pulsebench_core::Error as CoreError;

use crate::config::{effective, prepare_out_dir, write_artifact, FileConfig, RunEcho};
use crate::errors::{CliError, Result};

const KEYS: [&str; 13] = [
    "min_rate",
    "max_rate",
    "flatline_rel_var",
    "clip_fraction",
    "sbp_lo",
    "sbp_hi",
    "dbp_lo",
    "dbp_hi",
    "age_lo",
    "age_hi",
    "bmi_lo",
    "bmi_hi",
    "require_bmi",
];

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Flat key=value configuration file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subject demographics table.
    #[arg(long)]
    manifest: PathBuf,
    /// Segment waveform + label table.
    #[arg(long)]
    segments: PathBuf,
    /// Arterial waveform file; when given, labels are re-derived from beats.
    #[arg(long)]
    abp: Option<PathBuf>,
    /// Directory for manifest.csv, segments.csv, audit.csv, summary.txt.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Lowest plausible heart rate for beat detection (bpm).
    #[arg(long)]
    min_rate: Option<f64>,
    /// Highest plausible heart rate for beat detection (bpm).
    #[arg(long)]
    max_rate: Option<f64>,
    /// Flatline threshold: variance below this fraction of squared range.
    #[arg(long)]
    flatline_rel_var: Option<f64>,
    /// Clipping threshold: fraction of samples pinned to a rail.
    #[arg(long)]
    clip_fraction: Option<f64>,
    /// Systolic inclusion bounds in mmHg (inclusive).
    #[arg(long)]
    sbp_lo: Option<f64>,
    #[arg(long)]
    sbp_hi: Option<f64>,
    /// Diastolic inclusion bounds in mmHg (inclusive).
    #[arg(long)]
    dbp_lo: Option<f64>,
    #[arg(long)]
    dbp_hi: Option<f64>,
    /// Age inclusion bounds in years (inclusive).
    #[arg(long)]
    age_lo: Option<u32>,
    #[arg(long)]
    age_hi: Option<u32>,
    /// Body-mass-index inclusion bounds (inclusive).
    #[arg(long)]
    bmi_lo: Option<f64>,
    #[arg(long)]
    bmi_hi: Option<f64>,
    /// Exclude subjects with no recorded body-mass index.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    require_bmi: Option<bool>,
}

pub fn run(args: CurateArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    cfg.check_known(&KEYS)?;

    let min_rate = effective(args.min_rate, &cfg, "min_rate", DEFAULT_MIN_RATE_BPM)?;
    let max_rate = effective(args.max_rate, &cfg, "max_rate", DEFAULT_MAX_RATE_BPM)?;
    if !(20.0 <= min_rate && min_rate < max_rate && max_rate <= 220.0) {
        return Err(CliError::usage(format!(
            "rate bounds ({min_rate}, {max_rate}) outside 20..=220 bpm"
        )));
    }

    let q_defaults = QualityThresholds::default();
    let thresholds = QualityThresholds {
        flatline_rel_var: effective(
            args.flatline_rel_var,
            &cfg,
            "flatline_rel_var",
            q_defaults.flatline_rel_var,
        )?,
        clip_fraction: effective(args.clip_fraction, &cfg, "clip_fraction", q_defaults.clip_fraction)?,
    };

    let c_defaults = CohortCriteria::default();
    let criteria = CohortCriteria {
        sbp_range: (
            effective(args.sbp_lo, &cfg, "sbp_lo", c_defaults.sbp_range.0)?,
            effective(args.sbp_hi, &cfg, "sbp_hi", c_defaults.sbp_range.1)?,
        ),
        dbp_range: (
            effective(args.dbp_lo, &cfg, "dbp_lo", c_defaults.dbp_range.0)?,
            effective(args.dbp_hi, &cfg, "dbp_hi", c_defaults.dbp_range.1)?,
        ),
        age_range: (
            effective(args.age_lo, &cfg, "age_lo", c_defaults.age_range.0)?,
            effective(args.age_hi, &cfg, "age_hi", c_defaults.age_range.1)?,
        ),
        bmi_range: (
            effective(args.bmi_lo, &cfg, "bmi_lo", c_defaults.bmi_range.0)?,
            effective(args.bmi_hi, &cfg, "bmi_hi", c_defaults.bmi_range.1)?,
        ),
        require_bmi: effective(args.require_bmi, &cfg, "require_bmi", c_defaults.require_bmi)?,
    };
    criteria.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let mut ds = load_dataset(&args.manifest, &args.segments)?;

    // Stage 1 (optional): re-derive labels from arterial beats. Segments whose
    // waveform yields no usable beat are dropped and counted, not fatal.
    let mut no_beats = 0usize;
    if let Some(abp_path) = &args.abp {
        let (abps, rate_hz, _) = load_abp(abp_path)?;
        if abps.len() != ds.segments.len() {
            return Err(CliError::data(format!(
                "arterial file has {} rows but dataset has {} segments",
                abps.len(),
                ds.segments.len()
            )));
        }
        let mut kept = Vec::with_capacity(ds.segments.len());
        for (abp, seg) in abps.iter().zip(&ds.segments) {
            if abp.subject_id != seg.subject_id {
                return Err(CliError::data(format!(
                    "arterial row for subject {} does not match segment subject {}",
                    abp.subject_id, seg.subject_id
                )));
            }
            match derive_bp_labels(abp, rate_hz, min_rate, max_rate) {
                Ok((sbp, dbp)) => {
                    let mut seg = seg.clone();
                    seg.sbp_label = sbp;
                    seg.dbp_label = dbp;
                    kept.push(seg);
                }
                Err(CoreError::NoBeats) => no_beats += 1,
                Err(e) => return Err(e.into()),
            }
        }
        ds.segments = kept;
    }

    // Stage 2: signal quality. Stage 3: cohort restriction.
    let (ds, quality_audit) = filter_quality(&ds, &thresholds);
    let (ds, cohort_audit) = apply_cohort_filter(&ds, &criteria)?;

    prepare_out_dir(&args.out, args.force)?;

    let mut audit = String::from("stage,reason,count\n");
    if args.abp.is_some() {
        audit.push_str(&format!("label,no_beats,{no_beats}\n"));
    }
    for (issue, count) in &quality_audit {
        audit.push_str(&format!("quality,{},{}\n", issue.name(), count));
    }
    for (reason, count) in &cohort_audit.counts {
        audit.push_str(&format!("cohort,{},{}\n", reason.name(), count));
    }
    audit.push_str(&format!("kept,,{}\n", ds.segments.len()));
    write_artifact(&args.out, "audit.csv", &audit)?;

    let mut echo = RunEcho::new();
    echo.set("min_rate", fmt_f64(min_rate));
    echo.set("max_rate", fmt_f64(max_rate));
    echo.set("flatline_rel_var", fmt_f64(thresholds.flatline_rel_var));
    echo.set("clip_fraction", fmt_f64(thresholds.clip_fraction));
    echo.set("sbp_lo", fmt_f64(criteria.sbp_range.0));
    echo.set("sbp_hi", fmt_f64(criteria.sbp_range.1));
    echo.set("dbp_lo", fmt_f64(criteria.dbp_range.0));
    echo.set("dbp_hi", fmt_f64(criteria.dbp_range.1));
    echo.set("age_lo", criteria.age_range.0);
    echo.set("age_hi", criteria.age_range.1);
    echo.set("bmi_lo", fmt_f64(criteria.bmi_range.0));
    echo.set("bmi_hi", fmt_f64(criteria.bmi_range.1));
    echo.set("require_bmi", criteria.require_bmi);
    echo.set("relabel", args.abp.is_some());
    echo.write(&args.out)?;

    if ds.segments.is_empty() {
        return Err(CliError::data(
            "no segments survived curation; see audit.csv".to_string(),
        ));
    }

    save_dataset(
        &ds,
        &args.out.join("manifest.csv"),
        &args.out.join("segments.csv"),
    )?;
    let summary = pulsebench_core::curation::summarize_cohort(&ds)?;
    write_artifact(&args.out, "summary.txt", &format!("{summary}\n"))?;

    println!(
        "curated {} subjects / {} segments into {}",
        ds.subjects.len(),
        ds.segments.len(),
        args.out.display()
    );
    Ok(())
}
