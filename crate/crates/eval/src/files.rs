//! Plain-text persistence for prediction sets.
//!
//! Layout: one comment header carrying the target and protocol, then one
//! `subject_id,y_true,y_pred` row per record. Floats are written in
//! shortest exact round-trip form, so save → load is lossless.

use std::path::Path;

use pulsebench_core::io::fmt_f64;
use pulsebench_nn::Target;

use crate::error::{Error, Result};
use crate::metrics::{PredictionRecord, PredictionSet, Protocol};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, msg: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Writes a prediction set to `path`.
pub fn save_predictions(set: &PredictionSet, path: &Path) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!(
        "#target={} protocol={}\n",
        set.target.code(),
        set.protocol.code()
    ));
    for r in &set.records {
        if r.subject_id.contains(',') || r.subject_id.contains('\n') {
            return Err(Error::DataMismatch(format!(
                "subject id {:?} cannot be stored in a comma-separated row",
                r.subject_id
            )));
        }
        text.push_str(&format!(
            "{},{},{}\n",
            r.subject_id,
            fmt_f64(r.y_true),
            fmt_f64(r.y_pred)
        ));
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a prediction set written by [`save_predictions`].
pub fn load_predictions(path: &Path) -> Result<PredictionSet> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed(path, "empty file"))?;
    let rest = header
        .strip_prefix('#')
        .ok_or_else(|| malformed(path, "first line must be a #target=... header"))?;

    let mut target = None;
    let mut protocol = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(path, format!("header field {field:?} is not key=value")))?;
        match key {
            "target" => {
                target = Some(Target::parse(value).map_err(|_| {
                    malformed(path, format!("unknown target {value:?} in header"))
                })?)
            }
            "protocol" => {
                protocol = Some(Protocol::parse(value).map_err(|_| {
                    malformed(path, format!("unknown protocol {value:?} in header"))
                })?)
            }
            other => return Err(malformed(path, format!("unknown header key {other:?}"))),
        }
    }
    let target = target.ok_or_else(|| malformed(path, "header is missing target"))?;
    let protocol = protocol.ok_or_else(|| malformed(path, "header is missing protocol"))?;

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(id), Some(yt), Some(yp), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(malformed(
                path,
                format!("line {}: expected subject_id,y_true,y_pred", lineno + 2),
            ));
        };
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                malformed(path, format!("line {}: bad {what} value {s:?}", lineno + 2))
            })
        };
        records.push(PredictionRecord {
            subject_id: id.to_string(),
            y_true: parse(yt, "y_true")?,
            y_pred: parse(yp, "y_pred")?,
        });
    }
    Ok(PredictionSet {
        target,
        protocol,
        records,
    })
}
