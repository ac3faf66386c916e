//! Label derivation from arterial waveforms, signal quality control, and
//! physiological cohort filtering with audit trails.

use std::collections::HashMap;
use std::fmt;

use crate::dataset::{CuratedDataset, SegmentRecord, Sex};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_RATE_BPM: f64 = 40.0;
pub const DEFAULT_MAX_RATE_BPM: f64 = 180.0;

/// Arterial blood pressure waveform paired with a PPG segment, mmHg per
/// sample, identical length and rate as its PPG counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct AbpSegment {
    pub subject_id: String,
    pub abp: Vec<f64>,
}

/// One cardiac cycle: the systolic peak sample and the diastolic trough that
/// follows it, before the next peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Beat {
    pub peak: usize,
    pub trough: usize,
}

// ---- beat detection ----

/// Local-extrema beat detector: candidate maxima are thinned by amplitude
/// with a minimum inter-peak distance of 60/max_rate seconds, then kept only
/// with prominence >= 10% of the segment range. Troughs are the first
/// minimum between consecutive peaks; a final beat is kept only when its
/// post-peak minimum is an interior turning point.
pub fn detect_beats(
    abp: &AbpSegment,
    sample_rate_hz: f64,
    min_rate_bpm: f64,
    max_rate_bpm: f64,
) -> Result<Vec<Beat>> {
    if !(20.0 <= min_rate_bpm && min_rate_bpm < max_rate_bpm && max_rate_bpm <= 220.0) {
        return Err(Error::NonPhysiologicalRate {
            msg: format!("rate bounds ({min_rate_bpm}, {max_rate_bpm}) outside 20..=220 bpm"),
        });
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::NonPhysiologicalRate {
            msg: format!("sample rate {sample_rate_hz} must be positive"),
        });
    }
    let x = &abp.abp;
    let n = x.len();
    if n < 3 {
        return Err(Error::NoBeats);
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::NoBeats);
    }

    // Strict rise into the peak, first sample of any plateau.
    let mut candidates: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if x[i - 1] < x[i] && x[i] >= x[i + 1] {
            candidates.push(i);
        }
    }

    let min_dist = ((60.0 / max_rate_bpm) * sample_rate_hz).ceil().max(1.0) as usize;
    let mut by_height = candidates.clone();
    by_height.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in by_height {
        if kept.iter().all(|&k| i.abs_diff(k) >= min_dist) {
            kept.push(i);
        }
    }
    kept.sort_unstable();

    // Prominence against the lowest point toward each neighboring kept peak.
    let min_prominence = 0.10 * range;
    let mut peaks: Vec<usize> = Vec::new();
    for (pos, &i) in kept.iter().enumerate() {
        let left_edge = if pos == 0 { 0 } else { kept[pos - 1] };
        let right_edge = if pos + 1 < kept.len() { kept[pos + 1] } else { n - 1 };
        let left_min = x[left_edge..i].iter().cloned().fold(x[i], f64::min);
        let right_min = x[i + 1..=right_edge].iter().cloned().fold(x[i], f64::min);
        if x[i] - left_min.max(right_min) >= min_prominence {
            peaks.push(i);
        }
    }

    let max_interval_s = 60.0 / min_rate_bpm;
    for w in peaks.windows(2) {
        let dt = (w[1] - w[0]) as f64 / sample_rate_hz;
        if dt > max_interval_s {
            return Err(Error::NonPhysiologicalRate {
                msg: format!("inter-beat interval {dt:.3} s exceeds {max_interval_s:.3} s"),
            });
        }
    }

    let first_min_index = |span: &[f64]| -> usize {
        let mut best = 0;
        for (j, &v) in span.iter().enumerate() {
            if v < span[best] {
                best = j;
            }
        }
        best
    };

    let mut beats = Vec::new();
    for w in peaks.windows(2) {
        let (p, q) = (w[0], w[1]);
        let trough = p + 1 + first_min_index(&x[p + 1..q]);
        beats.push(Beat { peak: p, trough });
    }
    // The final beat counts only when its trough is a real turning point:
    // interior, and followed by a rise of at least the prominence floor
    // (otherwise the segment was cut mid-descent or mid-dicrotic-bump).
    if let Some(&last) = peaks.last() {
        if last + 1 < n {
            let trough = last + 1 + first_min_index(&x[last + 1..]);
            let rebound = x[trough + 1..].iter().cloned().fold(x[trough], f64::max);
            if trough < n - 1 && rebound >= x[trough] + min_prominence {
                beats.push(Beat { peak: last, trough });
            }
        }
    }

    if beats.len() < 3 {
        return Err(Error::NoBeats);
    }
    Ok(beats)
}

/// Per-segment labels: mean systolic peak and mean diastolic trough over the
/// detected beats.
pub fn derive_bp_labels(
    abp: &AbpSegment,
    sample_rate_hz: f64,
    min_rate_bpm: f64,
    max_rate_bpm: f64,
) -> Result<(f64, f64)> {
    let beats = detect_beats(abp, sample_rate_hz, min_rate_bpm, max_rate_bpm)?;
    let n = beats.len() as f64;
    let sbp = beats.iter().map(|b| abp.abp[b.peak]).sum::<f64>() / n;
    let dbp = beats.iter().map(|b| abp.abp[b.trough]).sum::<f64>() / n;
    Ok((sbp, dbp))
}

// ---- signal quality ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityThresholds {
    /// Flatline when sample variance < this fraction of the squared range.
    pub flatline_rel_var: f64,
    /// Clipping when either rail (min or max) holds at least this fraction
    /// of all samples.
    pub clip_fraction: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        QualityThresholds {
            flatline_rel_var: 1e-6,
            clip_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QualityIssue {
    NonFinite,
    Flatline,
    Clipping,
}

impl QualityIssue {
    pub fn name(self) -> &'static str {
        match self {
            QualityIssue::NonFinite => "non_finite",
            QualityIssue::Flatline => "flatline",
            QualityIssue::Clipping => "clipping",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityVerdict {
    Pass,
    Fail(QualityIssue),
}

impl QualityVerdict {
    pub fn passed(self) -> bool {
        matches!(self, QualityVerdict::Pass)
    }
}

pub fn quality_filter(seg: &SegmentRecord, t: &QualityThresholds) -> QualityVerdict {
    if seg.ppg.is_empty() || seg.ppg.iter().any(|x| !x.is_finite()) {
        return QualityVerdict::Fail(QualityIssue::NonFinite);
    }
    let n = seg.ppg.len() as f64;
    let lo = seg.ppg.iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = seg.ppg.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let range = (hi - lo) as f64;
    if range <= 0.0 {
        return QualityVerdict::Fail(QualityIssue::Flatline);
    }
    let mean = seg.ppg.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = seg
        .ppg
        .iter()
        .map(|&x| {
            let d = x as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    if var < t.flatline_rel_var * range * range {
        return QualityVerdict::Fail(QualityIssue::Flatline);
    }
    let at_min = seg.ppg.iter().filter(|&&x| x == lo).count() as f64;
    let at_max = seg.ppg.iter().filter(|&&x| x == hi).count() as f64;
    if at_min >= t.clip_fraction * n || at_max >= t.clip_fraction * n {
        return QualityVerdict::Fail(QualityIssue::Clipping);
    }
    QualityVerdict::Pass
}

/// Drop segments failing quality control; subjects left with no segments are
/// dropped too. Audit counts sum to the number of removed segments.
pub fn filter_quality(
    ds: &CuratedDataset,
    t: &QualityThresholds,
) -> (CuratedDataset, Vec<(QualityIssue, usize)>) {
    let mut counts: HashMap<QualityIssue, usize> = HashMap::new();
    let mut segments = Vec::new();
    for seg in &ds.segments {
        match quality_filter(seg, t) {
            QualityVerdict::Pass => segments.push(seg.clone()),
            QualityVerdict::Fail(issue) => *counts.entry(issue).or_insert(0) += 1,
        }
    }
    let kept = retain_populated_subjects(ds, segments);
    let audit = [
        QualityIssue::NonFinite,
        QualityIssue::Flatline,
        QualityIssue::Clipping,
    ]
    .iter()
    .map(|&i| (i, counts.get(&i).copied().unwrap_or(0)))
    .collect();
    (kept, audit)
}

fn retain_populated_subjects(ds: &CuratedDataset, segments: Vec<SegmentRecord>) -> CuratedDataset {
    let populated: std::collections::HashSet<&str> =
        segments.iter().map(|s| s.subject_id.as_str()).collect();
    let subjects = ds
        .subjects
        .iter()
        .filter(|s| populated.contains(s.subject_id.as_str()))
        .cloned()
        .collect();
    CuratedDataset {
        subjects,
        segments,
        sample_rate_hz: ds.sample_rate_hz,
        segment_length: ds.segment_length,
    }
}

// ---- cohort criteria ----

#[derive(Debug, Clone, PartialEq)]
pub struct CohortCriteria {
    pub sbp_range: (f64, f64),
    pub dbp_range: (f64, f64),
    pub age_range: (u32, u32),
    pub bmi_range: (f64, f64),
    pub require_bmi: bool,
}

impl Default for CohortCriteria {
    fn default() -> Self {
        CohortCriteria {
            sbp_range: (90.0, 130.0),
            dbp_range: (60.0, 85.0),
            age_range: (18, 65),
            bmi_range: (18.5, 25.0),
            require_bmi: true,
        }
    }
}

impl CohortCriteria {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("sbp", self.sbp_range),
            ("dbp", self.dbp_range),
            ("bmi", self.bmi_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo < hi) {
                return Err(Error::InvalidConfig {
                    msg: format!("{name} range ({lo}, {hi}) must have lower < upper"),
                });
            }
        }
        if self.age_range.0 >= self.age_range.1 {
            return Err(Error::InvalidConfig {
                msg: format!("age range {:?} must have lower < upper", self.age_range),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExclusionReason {
    AgeOutOfRange,
    MissingBmi,
    BmiOutOfRange,
    SbpOutOfRange,
    DbpOutOfRange,
}

impl ExclusionReason {
    pub const ALL: [ExclusionReason; 5] = [
        ExclusionReason::AgeOutOfRange,
        ExclusionReason::MissingBmi,
        ExclusionReason::BmiOutOfRange,
        ExclusionReason::SbpOutOfRange,
        ExclusionReason::DbpOutOfRange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExclusionReason::AgeOutOfRange => "age_out_of_range",
            ExclusionReason::MissingBmi => "missing_bmi",
            ExclusionReason::BmiOutOfRange => "bmi_out_of_range",
            ExclusionReason::SbpOutOfRange => "sbp_out_of_range",
            ExclusionReason::DbpOutOfRange => "dbp_out_of_range",
        }
    }
}

/// Per-reason exclusion counts; rows always cover every reason so audits from
/// different runs line up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortAudit {
    pub counts: Vec<(ExclusionReason, usize)>,
}

impl CohortAudit {
    pub fn total_excluded(&self) -> usize {
        self.counts.iter().map(|(_, c)| c).sum()
    }
}

impl fmt::Display for CohortAudit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (reason, count)) in self.counts.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{},{}", reason.name(), count)?;
        }
        Ok(())
    }
}

fn segment_exclusion(
    seg: &SegmentRecord,
    subject: &crate::dataset::SubjectDemographics,
    c: &CohortCriteria,
) -> Option<ExclusionReason> {
    if subject.age < c.age_range.0 || subject.age > c.age_range.1 {
        return Some(ExclusionReason::AgeOutOfRange);
    }
    match subject.bmi {
        None if c.require_bmi => return Some(ExclusionReason::MissingBmi),
        Some(bmi) if bmi < c.bmi_range.0 || bmi > c.bmi_range.1 => {
            return Some(ExclusionReason::BmiOutOfRange)
        }
        _ => {}
    }
    if seg.sbp_label < c.sbp_range.0 || seg.sbp_label > c.sbp_range.1 {
        return Some(ExclusionReason::SbpOutOfRange);
    }
    if seg.dbp_label < c.dbp_range.0 || seg.dbp_label > c.dbp_range.1 {
        return Some(ExclusionReason::DbpOutOfRange);
    }
    None
}

/// Keep exactly the segments whose subject satisfies the age/BMI criteria and
/// whose labels satisfy the SBP/DBP criteria, all bounds inclusive. Each
/// excluded segment is counted under the first failing criterion in the
/// order: age, missing BMI, BMI, SBP, DBP.
pub fn apply_cohort_filter(
    ds: &CuratedDataset,
    c: &CohortCriteria,
) -> Result<(CuratedDataset, CohortAudit)> {
    c.validate()?;
    let index = ds.subject_index();
    let mut counts: HashMap<ExclusionReason, usize> = HashMap::new();
    let mut segments = Vec::new();
    for seg in &ds.segments {
        let subject = &ds.subjects[index[seg.subject_id.as_str()]];
        match segment_exclusion(seg, subject, c) {
            None => segments.push(seg.clone()),
            Some(reason) => *counts.entry(reason).or_insert(0) += 1,
        }
    }
    let kept = retain_populated_subjects(ds, segments);
    let audit = CohortAudit {
        counts: ExclusionReason::ALL
            .iter()
            .map(|&r| (r, counts.get(&r).copied().unwrap_or(0)))
            .collect(),
    };
    Ok((kept, audit))
}

// ---- cohort summary ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

/// Population mean and standard deviation (divide by n, not n - 1).
pub fn mean_sd(xs: &[f64]) -> MeanSd {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    MeanSd {
        mean,
        sd: var.sqrt(),
    }
}

/// Segment-level cohort statistics: sex counts are segment counts, and
/// demographics are broadcast to each subject's segments before averaging.
/// SD is the population (divide-by-n) form.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSummary {
    pub total_subjects: usize,
    pub total_segments: usize,
    pub male_segments: usize,
    pub female_segments: usize,
    pub age: MeanSd,
    pub bmi: Option<MeanSd>,
    pub sbp: MeanSd,
    pub dbp: MeanSd,
}

pub fn summarize_cohort(ds: &CuratedDataset) -> Result<CohortSummary> {
    if ds.segments.is_empty() || ds.subjects.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let index = ds.subject_index();
    let mut male = 0usize;
    let mut female = 0usize;
    let mut ages = Vec::with_capacity(ds.segments.len());
    let mut bmis = Vec::with_capacity(ds.segments.len());
    let mut sbps = Vec::with_capacity(ds.segments.len());
    let mut dbps = Vec::with_capacity(ds.segments.len());
    for seg in &ds.segments {
        let subject = &ds.subjects[index[seg.subject_id.as_str()]];
        match subject.sex {
            Sex::Male => male += 1,
            Sex::Female => female += 1,
        }
        ages.push(subject.age as f64);
        if let Some(bmi) = subject.bmi {
            bmis.push(bmi);
        }
        sbps.push(seg.sbp_label);
        dbps.push(seg.dbp_label);
    }
    Ok(CohortSummary {
        total_subjects: ds.subjects.len(),
        total_segments: ds.segments.len(),
        male_segments: male,
        female_segments: female,
        age: mean_sd(&ages),
        bmi: if bmis.is_empty() {
            None
        } else {
            Some(mean_sd(&bmis))
        },
        sbp: mean_sd(&sbps),
        dbp: mean_sd(&dbps),
    })
}

impl fmt::Display for CohortSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Total Sub: {}", self.total_subjects)?;
        writeln!(f, "Total Seg: {}", self.total_segments)?;
        writeln!(f, "Male: {}", self.male_segments)?;
        writeln!(f, "Female: {}", self.female_segments)?;
        writeln!(f, "Age: {:.1}±{:.1}", self.age.mean, self.age.sd)?;
        match self.bmi {
            Some(b) => writeln!(f, "BMI: {:.1}±{:.1}", b.mean, b.sd)?,
            None => writeln!(f, "BMI: n/a")?,
        }
        writeln!(f, "SBP: {:.1}±{:.1}", self.sbp.mean, self.sbp.sd)?;
        write!(f, "DBP: {:.1}±{:.1}", self.dbp.mean, self.dbp.sd)
    }
}
