//! `pulsebench`: a reproducible pipeline for cuffless blood-pressure
//! benchmarking — synthesize or curate a cohort, split it by subject,
//! train model variants, and score them under calibration-based and
//! calibration-free protocols.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;
mod errors;

use clap::Parser;

#[derive(Debug, Parser)]
#[command(
    name = "pulsebench",
    version,
    about = "Benchmark cuffless blood-pressure estimators on photoplethysmography data"
)]
enum Cli {
    /// Generate a synthetic cohort with known ground truth.
    Synth(commands::synth::SynthArgs),
    /// Relabel, quality-screen, and cohort-restrict a dataset.
    Curate(commands::curate::CurateArgs),
    /// Partition a dataset into train / cal_based / cal_free.
    Split(commands::split::SplitArgs),
    /// Fit a model variant (optionally as a fold ensemble).
    Train(commands::train::TrainArgs),
    /// Score a checkpoint on a split's held-out partitions.
    Eval(commands::eval::EvalArgs),
    /// Merge evaluation runs into one benchmark report.
    Report(commands::report::ReportArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; they exit 0.
            e.print().expect("stderr is writable");
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli {
        Cli::Synth(args) => commands::synth::run(args),
        Cli::Curate(args) => commands::curate::run(args),
        Cli::Split(args) => commands::split::run(args),
        Cli::Train(args) => commands::train::run(args),
        Cli::Eval(args) => commands::eval::run(args),
        Cli::Report(args) => commands::report::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
