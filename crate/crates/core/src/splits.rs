//! Train / CalBased / CalFree partitioning and subject-wise k-fold plans.
//!
//! CalFree holds out a seeded random subset of subjects entirely; CalBased
//! holds out the chronologically last segments (file order within subject)
//! of each remaining subject that has at least two segments, mimicking
//! calibrate-then-deploy usage.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::dataset::CuratedDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    CalBased,
    CalFree,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::CalBased => "cal_based",
            Partition::CalFree => "cal_free",
        }
    }
}

/// One row of the split manifest: where segment `segment_index` of the input
/// dataset went.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRow {
    pub partition: Partition,
    pub subject_id: String,
    pub segment_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: CuratedDataset,
    pub cal_based: CuratedDataset,
    pub cal_free: CuratedDataset,
    pub seed: u64,
    /// One row per input segment, in input order.
    pub rows: Vec<SplitRow>,
}

impl DatasetSplit {
    /// Bit-exact diffable manifest text, header plus one row per segment.
    pub fn manifest_text(&self) -> String {
        let mut out = String::from("partition,subject_id,segment_index\n");
        for row in &self.rows {
            out.push_str(row.partition.name());
            out.push(',');
            out.push_str(&row.subject_id);
            out.push(',');
            out.push_str(&row.segment_index.to_string());
            out.push('\n');
        }
        out
    }
}

fn subset(ds: &CuratedDataset, segment_indices: &[usize]) -> CuratedDataset {
    let segments: Vec<_> = segment_indices
        .iter()
        .map(|&i| ds.segments[i].clone())
        .collect();
    let populated: HashSet<&str> = segments.iter().map(|s| s.subject_id.as_str()).collect();
    CuratedDataset {
        subjects: ds
            .subjects
            .iter()
            .filter(|s| populated.contains(s.subject_id.as_str()))
            .cloned()
            .collect(),
        segments,
        sample_rate_hz: ds.sample_rate_hz,
        segment_length: ds.segment_length,
    }
}

/// Seeded three-way partition. A `cal_free_subject_fraction` of subjects
/// (floor, clamped to keep at least one and leave at least two) moves to
/// CalFree with all segments; each remaining subject with m >= 2 segments
/// donates its last max(1, floor(cal_based_segment_fraction * m)) segments
/// (capped at m - 1) to CalBased. Identical inputs reproduce identical
/// splits bit for bit.
pub fn build_split(
    ds: &CuratedDataset,
    cal_free_subject_fraction: f64,
    cal_based_segment_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    for (name, f) in [
        ("cal_free_subject_fraction", cal_free_subject_fraction),
        ("cal_based_segment_fraction", cal_based_segment_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::DegenerateFraction {
                msg: format!("{name} = {f} outside (0, 1)"),
            });
        }
    }
    let n = ds.subjects.len();
    if n < 3 {
        return Err(Error::TooFewSubjects { have: n, need: 3 });
    }

    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let n_free = ((cal_free_subject_fraction * n as f64).floor() as usize).clamp(1, n - 2);
    let free: HashSet<&str> = order[..n_free]
        .iter()
        .map(|&i| ds.subjects[i].subject_id.as_str())
        .collect();

    let by_subject = ds.segments_by_subject();
    let mut train_idx = Vec::new();
    let mut cal_based_idx = Vec::new();
    let mut cal_free_idx = Vec::new();
    for subject in &ds.subjects {
        let id = subject.subject_id.as_str();
        let Some(segs) = by_subject.get(id) else {
            continue;
        };
        if free.contains(id) {
            cal_free_idx.extend_from_slice(segs);
            continue;
        }
        let m = segs.len();
        if m >= 2 {
            let held = ((cal_based_segment_fraction * m as f64).floor() as usize)
                .clamp(1, m - 1);
            train_idx.extend_from_slice(&segs[..m - held]);
            cal_based_idx.extend_from_slice(&segs[m - held..]);
        } else {
            train_idx.extend_from_slice(segs);
        }
    }
    for (name, idx) in [
        ("train", &train_idx),
        ("cal_based", &cal_based_idx),
        ("cal_free", &cal_free_idx),
    ] {
        if idx.is_empty() {
            return Err(Error::DegenerateFraction {
                msg: format!("{name} partition would be empty"),
            });
        }
    }
    train_idx.sort_unstable();
    cal_based_idx.sort_unstable();
    cal_free_idx.sort_unstable();

    let mut assignment = vec![Partition::Train; ds.segments.len()];
    for &i in &cal_based_idx {
        assignment[i] = Partition::CalBased;
    }
    for &i in &cal_free_idx {
        assignment[i] = Partition::CalFree;
    }
    let rows = ds
        .segments
        .iter()
        .enumerate()
        .map(|(i, seg)| SplitRow {
            partition: assignment[i],
            subject_id: seg.subject_id.clone(),
            segment_index: i,
        })
        .collect();

    Ok(DatasetSplit {
        train: subset(ds, &train_idx),
        cal_based: subset(ds, &cal_based_idx),
        cal_free: subset(ds, &cal_free_idx),
        seed,
        rows,
    })
}

/// Subject-to-fold assignment for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &fold in self.assignment.values() {
            sizes[fold] += 1;
        }
        sizes
    }

    pub fn subjects_in_fold(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

impl fmt::Display for FoldPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "subject_id,fold")?;
        for (id, fold) in &self.assignment {
            writeln!(f, "{id},{fold}")?;
        }
        Ok(())
    }
}

/// Shuffle subjects with the seed, then deal them round-robin so fold sizes
/// differ by at most one.
pub fn build_folds(train: &CuratedDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig {
            msg: format!("k = {k} must be at least 2"),
        });
    }
    let n = train.subjects.len();
    if n < k {
        return Err(Error::TooFewSubjects { have: n, need: k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let assignment = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| (train.subjects[i].subject_id.clone(), pos % k))
        .collect();
    Ok(FoldPlan {
        k,
        assignment,
        seed,
    })
}
