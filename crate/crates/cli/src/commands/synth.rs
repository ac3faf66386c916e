//! `pulsebench synth`: generate a synthetic cohort with ground truth.

use std::path::PathBuf;

use clap::Args;
use pulsebench_core::dataset::save_dataset;
use pulsebench_core::io::fmt_f64;
use pulsebench_core::synth::{generate_cohort, save_abp, save_sidecar, BpModel, SynthConfig};

use crate::config::{effective, prepare_out_dir, FileConfig, RunEcho};
use crate::errors::{CliError, Result};

const KEYS: [&str; 10] = [
    "subjects",
    "segments_lo",
    "segments_hi",
    "seed",
    "noise_sd",
    "label_noise_sd",
    "sample_rate",
    "length",
    "abp",
    "bp_coefficients",
];

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Flat key=value configuration file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for manifest.csv, segments.csv, sidecar.csv (and abp.csv).
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Number of subjects to generate.
    #[arg(long)]
    subjects: Option<usize>,
    /// Minimum segments per subject.
    #[arg(long)]
    segments_lo: Option<usize>,
    /// Maximum segments per subject.
    #[arg(long)]
    segments_hi: Option<usize>,
    /// Generator seed; identical seeds reproduce identical bytes.
    #[arg(long)]
    seed: Option<u64>,
    /// Additive waveform noise (standard deviation).
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Label measurement noise in mmHg (standard deviation).
    #[arg(long)]
    label_noise_sd: Option<f64>,
    /// Waveform sample rate in Hz.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Samples per segment.
    #[arg(long)]
    length: Option<usize>,
    /// Also emit arterial waveforms (abp.csv) for label re-derivation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    abp: Option<bool>,
    /// Twelve comma-separated pressure-model coefficients.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    bp_coefficients: Option<Vec<f64>>,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    cfg.check_known(&KEYS)?;

    let defaults = SynthConfig::default();
    let subjects = effective(args.subjects, &cfg, "subjects", defaults.n_subjects)?;
    let segments_lo = effective(args.segments_lo, &cfg, "segments_lo", defaults.segments_per_subject.0)?;
    let segments_hi = effective(args.segments_hi, &cfg, "segments_hi", defaults.segments_per_subject.1)?;
    let seed = effective(args.seed, &cfg, "seed", defaults.seed)?;
    let noise_sd = effective(args.noise_sd, &cfg, "noise_sd", defaults.noise_sd)?;
    let label_noise_sd = effective(
        args.label_noise_sd,
        &cfg,
        "label_noise_sd",
        defaults.label_noise_sd_mmhg,
    )?;
    let sample_rate = effective(args.sample_rate, &cfg, "sample_rate", defaults.sample_rate_hz)?;
    let length = effective(args.length, &cfg, "length", defaults.segment_length)?;
    let abp = effective(args.abp, &cfg, "abp", false)?;

    let coefficients = match args.bp_coefficients {
        Some(v) => Some(v),
        None => cfg
            .get::<String>("bp_coefficients")?
            .map(|s| {
                s.split(',')
                    .map(|t| {
                        t.trim().parse::<f64>().map_err(|_| {
                            CliError::usage(format!("bp_coefficients entry {t:?} is not a number"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .transpose()?,
    };
    let bp_model = match coefficients.as_deref() {
        None => BpModel::default(),
        Some(c) => {
            let arr: &[f64; 12] = c.try_into().map_err(|_| {
                CliError::usage(format!(
                    "bp_coefficients needs exactly 12 values, got {}",
                    c.len()
                ))
            })?;
            BpModel::from_coefficients(arr)
        }
    };

    let synth_cfg = SynthConfig {
        n_subjects: subjects,
        segments_per_subject: (segments_lo, segments_hi),
        seed,
        noise_sd,
        label_noise_sd_mmhg: label_noise_sd,
        bp_model,
        sample_rate_hz: sample_rate,
        segment_length: length,
        emit_abp: abp,
    };
    let cohort = generate_cohort(&synth_cfg)?;

    prepare_out_dir(&args.out, args.force)?;
    save_dataset(
        &cohort.dataset,
        &args.out.join("manifest.csv"),
        &args.out.join("segments.csv"),
    )?;
    save_sidecar(&cohort.sidecar, &args.out.join("sidecar.csv"))?;
    if abp {
        save_abp(&cohort.abp, sample_rate, length, &args.out.join("abp.csv"))?;
    }

    let mut echo = RunEcho::new();
    echo.set("subjects", subjects);
    echo.set("segments_lo", segments_lo);
    echo.set("segments_hi", segments_hi);
    echo.set("seed", seed);
    echo.set("noise_sd", fmt_f64(noise_sd));
    echo.set("label_noise_sd", fmt_f64(label_noise_sd));
    echo.set("sample_rate", fmt_f64(sample_rate));
    echo.set("length", length);
    echo.set("abp", abp);
    echo.set(
        "bp_coefficients",
        synth_cfg
            .bp_model
            .coefficients()
            .iter()
            .map(|&c| fmt_f64(c))
            .collect::<Vec<_>>()
            .join(","),
    );
    echo.write(&args.out)?;

    println!(
        "synthesized {} subjects / {} segments into {}",
        cohort.dataset.subjects.len(),
        cohort.dataset.segments.len(),
        args.out.display()
    );
    Ok(())
}
