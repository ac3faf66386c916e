//! Seeded synthetic cohort generator with ground-truth sidecars.
//!
//! Each segment is a train of two-Gaussian pulses (systolic peak plus
//! dicrotic bump) whose rate and amplitude-ratio morphology derive from
//! per-subject latent state. True SBP/DBP are affine in (heart rate,
//! amplitude ratio, age, sex, bmi) around the centers of the generator
//! ranges, plus seeded noise, clamped into the default cohort criteria
//! ranges. Identical configs reproduce identical bytes.

use std::io::Write;
use std::path::Path;

use crate::curation::{AbpSegment, CohortCriteria};
use crate::dataset::{CuratedDataset, SegmentRecord, Sex, SubjectDemographics};
use crate::error::{Error, Result};
use crate::io::{create_file, finish, fmt_f64};
use crate::rng::Rng;

// Pulse morphology as fractions of the beat period.
const P1_CENTER: f64 = 0.20;
const P1_SIGMA: f64 = 0.08;
const P2_CENTER: f64 = 0.45;
const P2_SIGMA: f64 = 0.12;
// Beyond six sigma a Gaussian contributes below f32 resolution.
const SIGMA_CUTOFF: f64 = 6.0;

// Latent ranges; affine features are centered on their midpoints.
const HR_RANGE: (f64, f64) = (55.0, 95.0);
const HR_JITTER: f64 = 3.0;
const HR_CLAMP: (f64, f64) = (50.0, 100.0);
const AMPR_BASE_RANGE: (f64, f64) = (0.25, 0.65);
const AMPR_JITTER: f64 = 0.05;
const AMPR_CLAMP: (f64, f64) = (0.2, 0.7);
const BEAT_AMP_JITTER: f64 = 0.01;

pub const HR_CENTER: f64 = 75.0;
pub const AMPR_CENTER: f64 = 0.45;
pub const AGE_CENTER: f64 = 41.5;
pub const BMI_CENTER: f64 = 21.75;

/// Affine map from centered latent features to one pressure value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpAffine {
    pub intercept: f64,
    pub hr: f64,
    pub amp_ratio: f64,
    pub age: f64,
    pub sex: f64,
    pub bmi: f64,
}

impl BpAffine {
    fn eval(&self, hr: f64, ampr: f64, age: f64, sex_code: f64, bmi: f64) -> f64 {
        self.intercept
            + self.hr * (hr - HR_CENTER)
            + self.amp_ratio * (ampr - AMPR_CENTER)
            + self.age * (age - AGE_CENTER)
            + self.sex * (sex_code - 0.5)
            + self.bmi * (bmi - BMI_CENTER)
    }
}

/// Twelve coefficients: SBP then DBP, each ordered
/// (intercept, hr, amp_ratio, age, sex, bmi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpModel {
    pub sbp: BpAffine,
    pub dbp: BpAffine,
}

impl BpModel {
    pub fn from_coefficients(c: &[f64; 12]) -> Self {
        let aff = |s: &[f64]| BpAffine {
            intercept: s[0],
            hr: s[1],
            amp_ratio: s[2],
            age: s[3],
            sex: s[4],
            bmi: s[5],
        };
        BpModel {
            sbp: aff(&c[..6]),
            dbp: aff(&c[6..]),
        }
    }

    pub fn coefficients(&self) -> [f64; 12] {
        let fl = |a: &BpAffine| [a.intercept, a.hr, a.amp_ratio, a.age, a.sex, a.bmi];
        let (s, d) = (fl(&self.sbp), fl(&self.dbp));
        [
            s[0], s[1], s[2], s[3], s[4], s[5], d[0], d[1], d[2], d[3], d[4], d[5],
        ]
    }

    /// Intercepts only: every label equals the intercept (plus noise).
    pub fn constant(sbp: f64, dbp: f64) -> Self {
        let mut c = [0.0; 12];
        c[0] = sbp;
        c[6] = dbp;
        BpModel::from_coefficients(&c)
    }
}

impl Default for BpModel {
    fn default() -> Self {
        BpModel::from_coefficients(&[
            115.3, 0.35, -12.0, 0.12, 2.0, 0.6, // SBP
            67.9, 0.22, -7.0, 0.06, 1.2, 0.4, // DBP
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    /// Inclusive range of segments per subject.
    pub segments_per_subject: (usize, usize),
    pub seed: u64,
    /// Waveform noise SD as a fraction of unit pulse amplitude.
    pub noise_sd: f64,
    /// Label noise SD in mmHg, applied before clamping.
    pub label_noise_sd_mmhg: f64,
    pub bp_model: BpModel,
    pub sample_rate_hz: f64,
    pub segment_length: usize,
    /// Also generate arterial waveforms realizing the labels.
    pub emit_abp: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 20,
            segments_per_subject: (50, 150),
            seed: 0,
            noise_sd: 0.02,
            label_noise_sd_mmhg: 2.0,
            bp_model: BpModel::default(),
            sample_rate_hz: crate::dataset::DEFAULT_SAMPLE_RATE_HZ,
            segment_length: crate::dataset::DEFAULT_SEGMENT_LENGTH,
            emit_abp: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig { msg });
        if self.n_subjects < 1 {
            return bad("n_subjects must be at least 1".into());
        }
        let (lo, hi) = self.segments_per_subject;
        if lo < 1 || lo > hi {
            return bad(format!("segments_per_subject ({lo}, {hi}) must satisfy 1 <= lo <= hi"));
        }
        if !(self.noise_sd >= 0.0) || !(self.label_noise_sd_mmhg >= 0.0) {
            return bad("noise levels must be nonnegative".into());
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad(format!("sample rate {} must be positive", self.sample_rate_hz));
        }
        if self.segment_length < 8 {
            return bad(format!("segment_length {} too short", self.segment_length));
        }
        Ok(())
    }
}

/// Ground truth for one emitted segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTruth {
    pub subject_id: String,
    pub segment_index: usize,
    pub heart_rate_bpm: f64,
    pub amp_ratio: f64,
    pub age: u32,
    pub sex_code: f64,
    pub bmi: f64,
    /// Affine model values before noise and clamping.
    pub sbp_clean: f64,
    pub dbp_clean: f64,
    /// Values written to the dataset.
    pub sbp_label: f64,
    pub dbp_label: f64,
    /// Ground-truth beat peak sample indices (complete beats only).
    pub beat_peaks: Vec<usize>,
    /// Achieved per-beat extrema means on the arterial waveform.
    pub abp_peak_mean: Option<f64>,
    pub abp_trough_mean: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthSidecar {
    pub records: Vec<SegmentTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub dataset: CuratedDataset,
    pub sidecar: GroundTruthSidecar,
    /// One waveform per segment when `emit_abp` is set, else empty.
    pub abp: Vec<AbpSegment>,
}

struct TrueBeat {
    peak: usize,
    trough: usize,
}

/// Raw unit-amplitude pulse train plus per-beat ground truth extrema indices.
struct BeatTrain {
    samples: Vec<f64>,
    beats: Vec<TrueBeat>,
}

fn add_gaussian(samples: &mut [f64], fs: f64, center_s: f64, sigma_s: f64, amp: f64) {
    let lo = ((center_s - SIGMA_CUTOFF * sigma_s) * fs).floor().max(0.0) as usize;
    let hi = (((center_s + SIGMA_CUTOFF * sigma_s) * fs).ceil() as usize).min(samples.len());
    let inv2s2 = 1.0 / (2.0 * sigma_s * sigma_s);
    for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
        let dt = i as f64 / fs - center_s;
        *s += amp * (-dt * dt * inv2s2).exp();
    }
}

fn build_beat_train(
    len: usize,
    fs: f64,
    hr_bpm: f64,
    amp_ratio: f64,
    phase01: f64,
    rng: &mut Rng,
) -> BeatTrain {
    let period = 60.0 / hr_bpm;
    let duration = len as f64 / fs;
    let phase0 = phase01 * period;
    let k_max = ((duration - phase0) / period).ceil() as i64 + 1;

    let mut samples = vec![0.0; len];
    let mut complete: Vec<(usize, usize)> = Vec::new();
    for k in -1..=k_max {
        let start = phase0 + k as f64 * period;
        let amp = 1.0 + rng.uniform(-BEAT_AMP_JITTER, BEAT_AMP_JITTER);
        add_gaussian(&mut samples, fs, start + P1_CENTER * period, P1_SIGMA * period, amp);
        add_gaussian(
            &mut samples,
            fs,
            start + P2_CENTER * period,
            P2_SIGMA * period,
            amp * amp_ratio,
        );
        if start >= 0.0 && start + period <= duration {
            let a = (start * fs).floor() as usize;
            let b = (((start + period) * fs).floor() as usize).min(len);
            if a < b {
                complete.push((a, b));
            }
        }
    }

    let argmax = |lo: usize, hi: usize| -> usize {
        let mut best = lo;
        for i in lo..hi {
            if samples[i] > samples[best] {
                best = i;
            }
        }
        best
    };
    let argmin = |lo: usize, hi: usize| -> usize {
        let mut best = lo;
        for i in lo..hi {
            if samples[i] < samples[best] {
                best = i;
            }
        }
        best
    };

    let peaks: Vec<usize> = complete.iter().map(|&(a, b)| argmax(a, b)).collect();
    let period_samples = (period * fs).round() as usize;
    let mut beats = Vec::with_capacity(peaks.len());
    for (i, &p) in peaks.iter().enumerate() {
        let search_end = if i + 1 < peaks.len() {
            peaks[i + 1]
        } else {
            (p + period_samples).min(len)
        };
        if p + 1 < search_end {
            beats.push(TrueBeat {
                peak: p,
                trough: argmin(p + 1, search_end),
            });
        }
    }
    BeatTrain { samples, beats }
}

const STREAM_SUBJECT: u64 = 1;
const STREAM_SEGMENT: u64 = 2;

pub fn generate_cohort(cfg: &SynthConfig) -> Result<SynthCohort> {
    cfg.validate()?;
    let criteria = CohortCriteria::default();
    let id_width = cfg.n_subjects.to_string().len().max(4);

    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    let mut segments = Vec::new();
    let mut records = Vec::new();
    let mut abps = Vec::new();

    for subject_idx in 0..cfg.n_subjects {
        let mut srng = Rng::new(Rng::derive_seed(cfg.seed, STREAM_SUBJECT, subject_idx as u64));
        let (lo, hi) = cfg.segments_per_subject;
        let n_segments = srng.uniform_int(lo as u64, hi as u64) as usize;
        let age = srng.uniform_int(criteria.age_range.0 as u64, criteria.age_range.1 as u64) as u32;
        let sex = if srng.uniform_int(0, 1) == 1 {
            Sex::Male
        } else {
            Sex::Female
        };
        let bmi = srng.uniform(criteria.bmi_range.0, criteria.bmi_range.1);
        let hr_base = srng.uniform(HR_RANGE.0, HR_RANGE.1);
        let ampr_base = srng.uniform(AMPR_BASE_RANGE.0, AMPR_BASE_RANGE.1);

        let subject_id = format!("S{subject_idx:0id_width$}");
        subjects.push(SubjectDemographics {
            subject_id: subject_id.clone(),
            age,
            sex,
            bmi: Some(bmi),
        });
        let sex_code = match sex {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
        };

        for segment_index in 0..n_segments {
            let stream_index = ((subject_idx as u64) << 20) | segment_index as u64;
            let mut grng = Rng::new(Rng::derive_seed(cfg.seed, STREAM_SEGMENT, stream_index));
            let hr = (hr_base + grng.uniform(-HR_JITTER, HR_JITTER))
                .clamp(HR_CLAMP.0, HR_CLAMP.1);
            let ampr = (ampr_base + grng.uniform(-AMPR_JITTER, AMPR_JITTER))
                .clamp(AMPR_CLAMP.0, AMPR_CLAMP.1);
            // Phase under half a period keeps the leading truncated pulse's
            // secondary bump center off-segment, so no stray local maximum
            // appears before the first full beat.
            let phase01 = 0.5 * grng.uniform01();
            let sbp_clean = cfg.bp_model.sbp.eval(hr, ampr, age as f64, sex_code, bmi);
            let dbp_clean = cfg.bp_model.dbp.eval(hr, ampr, age as f64, sex_code, bmi);
            let sbp_label = (sbp_clean + grng.normal() * cfg.label_noise_sd_mmhg)
                .clamp(criteria.sbp_range.0, criteria.sbp_range.1);
            let dbp_label = (dbp_clean + grng.normal() * cfg.label_noise_sd_mmhg)
                .clamp(criteria.dbp_range.0, criteria.dbp_range.1);

            let train = build_beat_train(
                cfg.segment_length,
                cfg.sample_rate_hz,
                hr,
                ampr,
                phase01,
                &mut grng,
            );

            let ppg: Vec<f32> = train
                .samples
                .iter()
                .map(|&s| (s + grng.normal() * cfg.noise_sd) as f32)
                .collect();

            let (abp_peak_mean, abp_trough_mean) = if cfg.emit_abp {
                let raw_max = train.samples.iter().cloned().fold(0.0, f64::max);
                let scale = (sbp_label - dbp_label) / raw_max;
                let abp: Vec<f64> = train
                    .samples
                    .iter()
                    .map(|&s| dbp_label + s * scale)
                    .collect();
                let nb = train.beats.len() as f64;
                let means = if train.beats.is_empty() {
                    (None, None)
                } else {
                    let peak = train.beats.iter().map(|b| abp[b.peak]).sum::<f64>() / nb;
                    let trough = train.beats.iter().map(|b| abp[b.trough]).sum::<f64>() / nb;
                    (Some(peak), Some(trough))
                };
                abps.push(AbpSegment {
                    subject_id: subject_id.clone(),
                    abp,
                });
                means
            } else {
                (None, None)
            };

            segments.push(SegmentRecord {
                subject_id: subject_id.clone(),
                ppg,
                sbp_label,
                dbp_label,
            });
            records.push(SegmentTruth {
                subject_id: subject_id.clone(),
                segment_index,
                heart_rate_bpm: hr,
                amp_ratio: ampr,
                age,
                sex_code,
                bmi,
                sbp_clean,
                dbp_clean,
                sbp_label,
                dbp_label,
                beat_peaks: train.beats.iter().map(|b| b.peak).collect(),
                abp_peak_mean,
                abp_trough_mean,
            });
        }
    }

    Ok(SynthCohort {
        dataset: CuratedDataset {
            subjects,
            segments,
            sample_rate_hz: cfg.sample_rate_hz,
            segment_length: cfg.segment_length,
        },
        sidecar: GroundTruthSidecar { records },
        abp: abps,
    })
}

pub const SIDECAR_HEADER: &str = "subject_id,segment_index,heart_rate_bpm,amp_ratio,age,sex,bmi,sbp_clean,dbp_clean,sbp_label,dbp_label,abp_peak_mean,abp_trough_mean";

pub fn save_sidecar(sidecar: &GroundTruthSidecar, path: &Path) -> Result<()> {
    let mut w = create_file(path)?;
    let werr = |e| Error::io(path, e);
    writeln!(w, "{SIDECAR_HEADER}").map_err(werr)?;
    for r in &sidecar.records {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.subject_id,
            r.segment_index,
            fmt_f64(r.heart_rate_bpm),
            fmt_f64(r.amp_ratio),
            r.age,
            fmt_f64(r.sex_code),
            fmt_f64(r.bmi),
            fmt_f64(r.sbp_clean),
            fmt_f64(r.dbp_clean),
            fmt_f64(r.sbp_label),
            fmt_f64(r.dbp_label),
            opt(r.abp_peak_mean),
            opt(r.abp_trough_mean),
        )
        .map_err(werr)?;
    }
    finish(w, path)
}

/// Arterial waveforms in the segments-file layout minus labels:
/// `#rate=<hz> length=<L>` header then `subject_id,s1 s2 ... sL` lines.
pub fn save_abp(abps: &[AbpSegment], rate_hz: f64, length: usize, path: &Path) -> Result<()> {
    let mut w = create_file(path)?;
    let werr = |e| Error::io(path, e);
    writeln!(w, "#rate={} length={}", fmt_f64(rate_hz), length).map_err(werr)?;
    let mut line = String::new();
    for seg in abps {
        line.clear();
        line.push_str(&seg.subject_id);
        line.push(',');
        for (i, &x) in seg.abp.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&fmt_f64(x));
        }
        writeln!(w, "{line}").map_err(werr)?;
    }
    finish(w, path)
}

/// Reads a file written by [`save_abp`]. Returns the waveforms along with
/// the sample rate and segment length declared in the header; every row
/// must carry exactly that many samples.
pub fn load_abp(path: &Path) -> Result<(Vec<AbpSegment>, f64, usize)> {
    let text = crate::io::read_to_string(path)?;
    let bad = |line: usize, msg: &str| Error::malformed(path, line, msg);

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad(1, "missing #rate=... length=... header"))?;
    let body = header
        .strip_prefix("#rate=")
        .ok_or_else(|| bad(1, "header must start with #rate="))?;
    let (rate_str, rest) = body
        .split_once(" length=")
        .ok_or_else(|| bad(1, "header must declare length="))?;
    let rate_hz: f64 = rate_str
        .parse()
        .map_err(|_| bad(1, "sample rate is not a number"))?;
    let length: usize = rest
        .parse()
        .map_err(|_| bad(1, "segment length is not an integer"))?;
    if !(rate_hz > 0.0) || length == 0 {
        return Err(bad(1, "sample rate and length must be positive"));
    }

    let mut abps = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let (subject_id, samples) = line
            .split_once(',')
            .ok_or_else(|| bad(lineno, "expected subject_id,<samples>"))?;
        let mut abp = Vec::with_capacity(length);
        for tok in samples.split(' ') {
            let x: f64 = tok
                .parse()
                .map_err(|_| bad(lineno, "sample is not a number"))?;
            if !x.is_finite() {
                return Err(bad(lineno, "sample is not finite"));
            }
            abp.push(x);
        }
        if abp.len() != length {
            return Err(Error::LengthMismatch {
                path: path.to_path_buf(),
                line: lineno,
                expected: length,
                got: abp.len(),
            });
        }
        abps.push(AbpSegment {
            subject_id: subject_id.to_string(),
            abp,
        });
    }
    Ok((abps, rate_hz, length))
}
