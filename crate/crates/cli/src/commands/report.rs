//! `pulsebench report`: combine evaluation runs into one benchmark table with
//! residual histograms and per-patient prediction series.

use std::path::{Path, PathBuf};

use clap::Args;
use pulsebench_core::io::fmt_f64;
use pulsebench_eval::{
    benchmark_report, compute_metrics, load_predictions, residual_histogram, top_patients_report,
    Interval, PredictionSet, Protocol, RunResult,
};
use pulsebench_nn::Backbone;

use crate::config::{prepare_out_dir, write_artifact, RunEcho};
use crate::errors::{CliError, Result};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation run as `backbone,variant,dir` where variant is `ppg_only`
    /// or `multimodal` and dir holds pred_cal_based.csv / pred_cal_free.csv.
    /// Repeat once per run.
    #[arg(long = "entry", required = true)]
    entries: Vec<String>,
    /// Directory for report.json, report.txt, and per-entry diagnostics.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Residual histogram bin count.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Patients with the most segments to plot per entry.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Confidence intervals (ci.csv from `train --folds`) aligned with the
    /// first entry's calibration-free predictions.
    #[arg(long)]
    ci: Option<PathBuf>,
}

struct Entry {
    backbone: Backbone,
    multimodal: bool,
    dir: PathBuf,
}

fn parse_entry(text: &str) -> Result<Entry> {
    let parts: Vec<&str> = text.split(',').collect();
    let [backbone, variant, dir] = parts.as_slice() else {
        return Err(CliError::usage(format!(
            "--entry {text:?} must be backbone,variant,dir"
        )));
    };
    let backbone = Backbone::parse(backbone).map_err(|e| CliError::usage(e.to_string()))?;
    let multimodal = match *variant {
        "ppg_only" => false,
        "multimodal" => true,
        other => {
            return Err(CliError::usage(format!(
                "variant {other:?} must be ppg_only or multimodal"
            )))
        }
    };
    Ok(Entry {
        backbone,
        multimodal,
        dir: PathBuf::from(dir),
    })
}

fn load_ci(path: &Path) -> Result<Vec<Interval>> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::errors::io_data(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("subject_id,y_true,mean,lo,hi") => {}
        _ => {
            return Err(CliError::data(format!(
                "{} does not start with the ci.csv header",
                path.display()
            )))
        }
    }
    let mut intervals = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [_, _, mean, lo, hi] = fields.as_slice() else {
            return Err(CliError::data(format!(
                "{} line {}: expected 5 fields",
                path.display(),
                i + 2
            )));
        };
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                CliError::data(format!(
                    "{} line {}: {s:?} is not a number",
                    path.display(),
                    i + 2
                ))
            })
        };
        intervals.push(Interval {
            mean: parse(mean)?,
            lo: parse(lo)?,
            hi: parse(hi)?,
        });
    }
    Ok(intervals)
}

fn patients_csv(series: &[pulsebench_eval::PatientSeries]) -> String {
    let mut text = String::from("subject_id,point,y_true,y_pred,lo,hi\n");
    for s in series {
        for (j, p) in s.points.iter().enumerate() {
            let (lo, hi) = match &p.interval {
                Some(iv) => (fmt_f64(iv.lo), fmt_f64(iv.hi)),
                None => (String::new(), String::new()),
            };
            text.push_str(&format!(
                "{},{j},{},{},{lo},{hi}\n",
                s.subject_id,
                fmt_f64(p.y_true),
                fmt_f64(p.y_pred),
            ));
        }
    }
    text
}

pub fn run(args: ReportArgs) -> Result<()> {
    let entries: Vec<Entry> = args
        .entries
        .iter()
        .map(|e| parse_entry(e))
        .collect::<Result<_>>()?;
    let ci = args.ci.as_deref().map(load_ci).transpose()?;

    let mut results = Vec::new();
    let mut free_sets: Vec<PredictionSet> = Vec::new();
    for entry in &entries {
        for protocol in [Protocol::CalBased, Protocol::CalFree] {
            let path = entry.dir.join(format!("pred_{}.csv", protocol.code()));
            let set = load_predictions(&path)?;
            if set.protocol != protocol {
                return Err(CliError::data(format!(
                    "{} holds {} predictions, expected {}",
                    path.display(),
                    set.protocol,
                    protocol
                )));
            }
            let metrics = compute_metrics(&set)?;
            results.push(RunResult {
                backbone: entry.backbone,
                multimodal: entry.multimodal,
                protocol,
                target: set.target,
                metrics,
            });
            if protocol == Protocol::CalFree {
                free_sets.push(set);
            }
        }
    }

    let report = benchmark_report(&results)?;
    prepare_out_dir(&args.out, args.force)?;
    write_artifact(&args.out, "report.json", &report.to_json())?;
    write_artifact(&args.out, "report.txt", &report.to_table())?;

    for (i, set) in free_sets.iter().enumerate() {
        let hist = residual_histogram(set, args.bins)?;
        let mut text = String::from("bin_lo,bin_hi,count\n");
        for (b, &count) in hist.counts.iter().enumerate() {
            text.push_str(&format!(
                "{},{},{count}\n",
                fmt_f64(hist.edges[b]),
                fmt_f64(hist.edges[b + 1]),
            ));
        }
        write_artifact(&args.out, &format!("residuals_{i}.csv"), &text)?;

        let distinct = {
            let mut ids: Vec<&str> = set.records.iter().map(|r| r.subject_id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        };
        let intervals = if i == 0 { ci.as_deref() } else { None };
        let series = top_patients_report(set, intervals, args.top.min(distinct))?;
        write_artifact(&args.out, &format!("patients_{i}.csv"), &patients_csv(&series))?;
    }
    if let Some(path) = &args.ci {
        std::fs::copy(path, args.out.join("ci_series.csv"))
            .map_err(|e| crate::errors::io_data(path, e))?;
    }

    let mut echo = RunEcho::new();
    echo.set("bins", args.bins);
    echo.set("top", args.top);
    echo.set("ci", ci.is_some());
    echo.write(&args.out)?;

    println!(
        "reported {} runs across {} entries into {}",
        results.len(),
        entries.len(),
        args.out.display()
    );
    Ok(())
}
