//! Conversion from curated datasets into flat training examples.

use pulsebench_core::dataset::CuratedDataset;
use pulsebench_nn::{demographic_features, NormStats, Target};

use crate::error::{Error, Result};

/// One labelled training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub subject_id: String,
    /// Waveform samples, one segment.
    pub ppg: Vec<f32>,
    /// Standardized demographic features, present only for fusion models.
    pub demo: Option<[f32; 3]>,
    /// Regression target in mmHg.
    pub label: f32,
}

/// Builds examples for the given target from the segments at `indices`.
///
/// When `multimodal` is set, each example carries the standardized
/// demographic features of its subject; every referenced subject must then
/// appear in the dataset manifest and carry a body-mass index.
pub fn build_examples(
    ds: &CuratedDataset,
    indices: &[usize],
    target: Target,
    norm: &NormStats,
    multimodal: bool,
) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let seg = ds.segments.get(i).ok_or_else(|| {
            Error::DataMismatch(format!(
                "segment index {i} out of range ({} segments)",
                ds.segments.len()
            ))
        })?;
        let demo = if multimodal {
            let subject = ds.subject(&seg.subject_id).ok_or_else(|| {
                Error::DataMismatch(format!(
                    "segment references unknown subject {}",
                    seg.subject_id
                ))
            })?;
            let f = demographic_features(subject, norm)?;
            Some([f[0] as f32, f[1] as f32, f[2] as f32])
        } else {
            None
        };
        let label = match target {
            Target::Sbp => seg.sbp_label,
            Target::Dbp => seg.dbp_label,
        };
        out.push(Example {
            subject_id: seg.subject_id.clone(),
            ppg: seg.ppg.clone(),
            demo,
            label: label as f32,
        });
    }
    Ok(out)
}

/// Convenience: all segments of the dataset, in stored order.
pub fn all_indices(ds: &CuratedDataset) -> Vec<usize> {
    (0..ds.segments.len()).collect()
}
