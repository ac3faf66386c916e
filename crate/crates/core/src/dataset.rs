//! Canonical in-memory and on-disk dataset representation.
//!
//! On-disk layout is two text files:
//! - manifest, comma-separated with header `subject_id,age,sex,bmi`
//!   (sex F or M, bmi empty when absent);
//! - segments, header line `#rate=<hz> length=<L>` then one record per line
//!   `subject_id,sbp,dbp,s1 s2 ... sL` with space-separated samples.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{create_file, finish, fmt_f32, fmt_f64, read_to_string};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 125.0;
pub const DEFAULT_SEGMENT_LENGTH: usize = 1250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn code(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDemographics {
    pub subject_id: String,
    pub age: u32,
    pub sex: Sex,
    /// kg/m²; `None` when the source record lacks BMI.
    pub bmi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub subject_id: String,
    pub ppg: Vec<f32>,
    pub sbp_label: f64,
    pub dbp_label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuratedDataset {
    pub subjects: Vec<SubjectDemographics>,
    pub segments: Vec<SegmentRecord>,
    pub sample_rate_hz: f64,
    pub segment_length: usize,
}

impl CuratedDataset {
    pub fn empty(sample_rate_hz: f64, segment_length: usize) -> Self {
        CuratedDataset {
            subjects: Vec::new(),
            segments: Vec::new(),
            sample_rate_hz,
            segment_length,
        }
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectDemographics> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }

    /// Map from subject_id to index in `subjects`, for O(1) joins.
    pub fn subject_index(&self) -> HashMap<&str, usize> {
        self.subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.subject_id.as_str(), i))
            .collect()
    }

    /// Segment indices grouped by subject, in segment order.
    pub fn segments_by_subject(&self) -> HashMap<&str, Vec<usize>> {
        let mut map: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, seg) in self.segments.iter().enumerate() {
            map.entry(seg.subject_id.as_str()).or_default().push(i);
        }
        map
    }
}

// ---- validation ----

/// Per-category counts of invariant violations. Validation reports instead of
/// failing so damaged datasets can still be inspected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub non_finite_samples: usize,
    pub label_order: usize,
    pub length_mismatch: usize,
    pub unknown_subject: usize,
    pub duplicate_subject: usize,
    pub bad_bmi: usize,
}

impl ValidationReport {
    pub fn total(&self) -> usize {
        self.non_finite_samples
            + self.label_order
            + self.length_mismatch
            + self.unknown_subject
            + self.duplicate_subject
            + self.bad_bmi
    }

    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "non_finite_samples,{}", self.non_finite_samples)?;
        writeln!(f, "label_order,{}", self.label_order)?;
        writeln!(f, "length_mismatch,{}", self.length_mismatch)?;
        writeln!(f, "unknown_subject,{}", self.unknown_subject)?;
        writeln!(f, "duplicate_subject,{}", self.duplicate_subject)?;
        write!(f, "bad_bmi,{}", self.bad_bmi)
    }
}

pub fn validate_dataset(ds: &CuratedDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for s in &ds.subjects {
        if !seen.insert(s.subject_id.as_str()) {
            report.duplicate_subject += 1;
        }
        if let Some(bmi) = s.bmi {
            if !(bmi > 0.0) {
                report.bad_bmi += 1;
            }
        }
    }
    for seg in &ds.segments {
        if seg.ppg.iter().any(|x| !x.is_finite()) {
            report.non_finite_samples += 1;
        }
        if !(seg.sbp_label > seg.dbp_label)
            || !seg.sbp_label.is_finite()
            || !seg.dbp_label.is_finite()
        {
            report.label_order += 1;
        }
        if seg.ppg.len() != ds.segment_length {
            report.length_mismatch += 1;
        }
        if !seen.contains(seg.subject_id.as_str()) {
            report.unknown_subject += 1;
        }
    }
    report
}

// ---- loading ----

fn parse_segments_header(path: &Path, line: &str) -> Result<(f64, usize)> {
    let bad = |msg: &str| Error::malformed(path, 1, msg);
    let rest = line
        .strip_prefix('#')
        .ok_or_else(|| bad("segments header must start with '#'"))?;
    let mut rate = None;
    let mut length = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("rate", v)) => {
                rate = Some(
                    v.parse::<f64>()
                        .map_err(|_| bad(&format!("bad rate {v:?}")))?,
                )
            }
            Some(("length", v)) => {
                length = Some(
                    v.parse::<usize>()
                        .map_err(|_| bad(&format!("bad length {v:?}")))?,
                )
            }
            _ => return Err(bad(&format!("unrecognized header field {field:?}"))),
        }
    }
    let rate = rate.ok_or_else(|| bad("header missing rate="))?;
    let length = length.ok_or_else(|| bad("header missing length="))?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(bad("rate must be positive"));
    }
    if length == 0 {
        return Err(bad("length must be positive"));
    }
    Ok((rate, length))
}

pub fn load_manifest(path: &Path) -> Result<Vec<SubjectDemographics>> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "subject_id,age,sex,bmi" => {}
        _ => {
            return Err(Error::malformed(
                path,
                1,
                "manifest header must be exactly 'subject_id,age,sex,bmi'",
            ))
        }
    }
    let mut subjects = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::malformed(
                path,
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let subject_id = fields[0].to_string();
        if subject_id.is_empty() {
            return Err(Error::malformed(path, lineno, "empty subject_id"));
        }
        if !seen.insert(subject_id.clone()) {
            return Err(Error::malformed(
                path,
                lineno,
                format!("duplicate subject_id {subject_id:?}"),
            ));
        }
        let age: u32 = fields[1]
            .parse()
            .map_err(|_| Error::malformed(path, lineno, format!("bad age {:?}", fields[1])))?;
        let sex = match fields[2] {
            "F" => Sex::Female,
            "M" => Sex::Male,
            other => {
                return Err(Error::malformed(
                    path,
                    lineno,
                    format!("sex must be F or M, got {other:?}"),
                ))
            }
        };
        let bmi = if fields[3].is_empty() {
            None
        } else {
            let v: f64 = fields[3].parse().map_err(|_| {
                Error::malformed(path, lineno, format!("bad bmi {:?}", fields[3]))
            })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::malformed(path, lineno, "bmi must be positive"));
            }
            Some(v)
        };
        subjects.push(SubjectDemographics {
            subject_id,
            age,
            sex,
            bmi,
        });
    }
    Ok(subjects)
}

/// Load and cross-validate a manifest plus segments file. The returned
/// dataset satisfies every type invariant; segment order follows file order.
pub fn load_dataset(manifest_path: &Path, segments_path: &Path) -> Result<CuratedDataset> {
    let subjects = load_manifest(manifest_path)?;
    let known: HashSet<&str> = subjects.iter().map(|s| s.subject_id.as_str()).collect();

    let text = read_to_string(segments_path)?;
    let mut lines = text.lines().enumerate();
    let (sample_rate_hz, segment_length) = match lines.next() {
        Some((_, header)) => parse_segments_header(segments_path, header)?,
        None => return Err(Error::malformed(segments_path, 1, "empty segments file")),
    };

    let mut segments = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::malformed(
                segments_path,
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let subject_id = fields[0];
        if !known.contains(subject_id) {
            return Err(Error::UnknownSubject {
                path: segments_path.to_path_buf(),
                line: lineno,
                subject_id: subject_id.to_string(),
            });
        }
        let sbp: f64 = fields[1].parse().map_err(|_| {
            Error::malformed(segments_path, lineno, format!("bad sbp {:?}", fields[1]))
        })?;
        let dbp: f64 = fields[2].parse().map_err(|_| {
            Error::malformed(segments_path, lineno, format!("bad dbp {:?}", fields[2]))
        })?;
        if !sbp.is_finite() || !dbp.is_finite() {
            return Err(Error::malformed(segments_path, lineno, "non-finite label"));
        }
        if !(sbp > dbp) {
            return Err(Error::malformed(
                segments_path,
                lineno,
                format!("sbp {sbp} must exceed dbp {dbp}"),
            ));
        }
        let mut ppg = Vec::with_capacity(segment_length);
        for tok in fields[3].split_ascii_whitespace() {
            let v: f32 = tok.parse().map_err(|_| {
                Error::malformed(segments_path, lineno, format!("bad sample {tok:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::malformed(
                    segments_path,
                    lineno,
                    "non-finite sample",
                ));
            }
            ppg.push(v);
        }
        if ppg.len() != segment_length {
            return Err(Error::LengthMismatch {
                path: segments_path.to_path_buf(),
                line: lineno,
                expected: segment_length,
                got: ppg.len(),
            });
        }
        segments.push(SegmentRecord {
            subject_id: subject_id.to_string(),
            ppg,
            sbp_label: sbp,
            dbp_label: dbp,
        });
    }

    Ok(CuratedDataset {
        subjects,
        segments,
        sample_rate_hz,
        segment_length,
    })
}

// ---- saving ----

pub fn save_manifest(subjects: &[SubjectDemographics], path: &Path) -> Result<()> {
    let mut w = create_file(path)?;
    let werr = |e| Error::io(path, e);
    writeln!(w, "subject_id,age,sex,bmi").map_err(werr)?;
    for s in subjects {
        let bmi = s.bmi.map(fmt_f64).unwrap_or_default();
        writeln!(w, "{},{},{},{}", s.subject_id, s.age, s.sex, bmi).map_err(werr)?;
    }
    finish(w, path)
}

pub fn save_segments(ds: &CuratedDataset, path: &Path) -> Result<()> {
    let mut w = create_file(path)?;
    let werr = |e| Error::io(path, e);
    writeln!(w, "#rate={} length={}", fmt_f64(ds.sample_rate_hz), ds.segment_length)
        .map_err(werr)?;
    let mut line = String::new();
    for seg in &ds.segments {
        line.clear();
        line.push_str(&seg.subject_id);
        line.push(',');
        line.push_str(&fmt_f64(seg.sbp_label));
        line.push(',');
        line.push_str(&fmt_f64(seg.dbp_label));
        line.push(',');
        for (i, &x) in seg.ppg.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&fmt_f32(x));
        }
        writeln!(w, "{line}").map_err(werr)?;
    }
    finish(w, path)
}

pub fn save_dataset(ds: &CuratedDataset, manifest_path: &Path, segments_path: &Path) -> Result<()> {
    save_manifest(&ds.subjects, manifest_path)?;
    save_segments(ds, segments_path)
}
