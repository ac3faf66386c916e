//! `pulsebench split`: carve a curated dataset into train / calibration-based
//! / calibration-free partitions.

use std::path::PathBuf;

use clap::Args;
use pulsebench_core::dataset::save_dataset;
use pulsebench_core::io::fmt_f64;
use pulsebench_core::splits::build_split;

use crate::config::{effective, prepare_out_dir, write_artifact, FileConfig, RunEcho};
use crate::errors::Result;

const KEYS: [&str; 3] = ["cal_free_fraction", "cal_based_fraction", "seed"];

const DEFAULT_FRACTION: f64 = 0.1;

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Flat key=value configuration file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subject demographics table.
    #[arg(long)]
    manifest: PathBuf,
    /// Segment waveform + label table.
    #[arg(long)]
    segments: PathBuf,
    /// Directory for split.csv and the three partition dataset pairs.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Fraction of subjects withheld entirely for calibration-free testing.
    #[arg(long)]
    cal_free_fraction: Option<f64>,
    /// Fraction of each remaining subject's segments withheld for
    /// calibration-based testing.
    #[arg(long)]
    cal_based_fraction: Option<f64>,
    /// Split seed; identical seeds reproduce identical partitions.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: SplitArgs) -> Result<()> {
    let cfg = FileConfig::load(args.config.as_deref())?;
    cfg.check_known(&KEYS)?;

    let cal_free = effective(args.cal_free_fraction, &cfg, "cal_free_fraction", DEFAULT_FRACTION)?;
    let cal_based = effective(args.cal_based_fraction, &cfg, "cal_based_fraction", DEFAULT_FRACTION)?;
    let seed = effective(args.seed, &cfg, "seed", 0u64)?;

    let ds = pulsebench_core::dataset::load_dataset(&args.manifest, &args.segments)?;
    let split = build_split(&ds, cal_free, cal_based, seed)?;

    prepare_out_dir(&args.out, args.force)?;
    write_artifact(&args.out, "split.csv", &split.manifest_text())?;
    for (name, part) in [
        ("train", &split.train),
        ("cal_based", &split.cal_based),
        ("cal_free", &split.cal_free),
    ] {
        save_dataset(
            part,
            &args.out.join(format!("{name}_manifest.csv")),
            &args.out.join(format!("{name}_segments.csv")),
        )?;
    }

    let mut echo = RunEcho::new();
    echo.set("cal_free_fraction", fmt_f64(cal_free));
    echo.set("cal_based_fraction", fmt_f64(cal_based));
    echo.set("seed", seed);
    echo.write(&args.out)?;

    println!(
        "split {} subjects: train {}/{} seg, cal_based {} seg, cal_free {}/{} seg",
        ds.subjects.len(),
        split.train.subjects.len(),
        split.train.segments.len(),
        split.cal_based.segments.len(),
        split.cal_free.subjects.len(),
        split.cal_free.segments.len(),
    );
    Ok(())
}
