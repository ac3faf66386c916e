//! Cross-validation confidence intervals: degenerate collapse, error
//! attribution, and coverage of noiseless labels on synthetic data.

use std::collections::BTreeMap;

use pulsebench_core::rng::Rng;
use pulsebench_core::splits::{build_folds, FoldPlan};
use pulsebench_core::synth::{generate_cohort, SynthConfig};
use pulsebench_eval::{
    all_indices, build_examples, kfold_confidence, Error, Example, TrainConfig,
};
use pulsebench_nn::{AdamConfig, Backbone, ModelSpec, NormStats, Target};

const L: usize = 32;

fn spec(seed: u64) -> ModelSpec {
    ModelSpec {
        backbone: Backbone::LeNet1d,
        use_demographics: false,
        target: Target::Sbp,
        input_length: L,
        seed,
    }
}

fn plan(assignment: &[(&str, usize)], k: usize) -> FoldPlan {
    FoldPlan {
        k,
        assignment: assignment
            .iter()
            .map(|&(id, f)| (id.to_string(), f))
            .collect::<BTreeMap<_, _>>(),
        seed: 0,
    }
}

fn quick_config(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        epochs,
        optimizer: AdamConfig {
            lr,
            weight_decay: 0.0,
            ..AdamConfig::default()
        },
        shuffle_seed: 7,
    }
}

fn example(subject: &str, rng: &mut Rng) -> Example {
    Example {
        subject_id: subject.to_string(),
        ppg: (0..L).map(|_| rng.uniform(0.0, 1.0) as f32).collect(),
        demo: None,
        label: rng.uniform(90.0, 140.0) as f32,
    }
}

#[test]
fn identical_fold_data_collapses_intervals_to_zero_width() {
    // Three subjects with value-identical example lists: withholding any
    // one of them leaves the same training sequence, so all folds train
    // the same model and the spread across folds is exactly zero.
    let mut rng = Rng::new(41);
    let shared: Vec<Example> = (0..4).map(|_| example("template", &mut rng)).collect();
    let mut train_data = Vec::new();
    for j in 0..shared.len() {
        for id in ["a", "b", "c"] {
            let mut ex = shared[j].clone();
            ex.subject_id = id.to_string();
            train_data.push(ex);
        }
    }
    let eval_data: Vec<Example> = (0..5).map(|_| example("eval", &mut rng)).collect();

    let intervals = kfold_confidence(
        &spec(3),
        NormStats::identity(),
        &train_data,
        &plan(&[("a", 0), ("b", 1), ("c", 2)], 3),
        &quick_config(2, 1e-3),
        &eval_data,
    )
    .unwrap();

    assert_eq!(intervals.len(), eval_data.len());
    for iv in &intervals {
        assert_eq!(iv.lo, iv.mean);
        assert_eq!(iv.hi, iv.mean);
        assert_eq!(iv.width(), 0.0);
        assert!(iv.covers(iv.mean));
    }
}

#[test]
fn differing_folds_produce_centred_nonzero_intervals() {
    let mut rng = Rng::new(42);
    let mut train_data = Vec::new();
    for id in ["a", "b", "c", "d"] {
        for _ in 0..3 {
            train_data.push(example(id, &mut rng));
        }
    }
    let eval_data: Vec<Example> = (0..4).map(|_| example("eval", &mut rng)).collect();

    let intervals = kfold_confidence(
        &spec(3),
        NormStats::identity(),
        &train_data,
        &plan(&[("a", 0), ("b", 1), ("c", 0), ("d", 1)], 2),
        &quick_config(4, 5e-3),
        &eval_data,
    )
    .unwrap();

    assert!(intervals.iter().any(|iv| iv.width() > 0.0));
    for iv in &intervals {
        assert!(iv.lo <= iv.mean && iv.mean <= iv.hi);
        let below = iv.mean - iv.lo;
        let above = iv.hi - iv.mean;
        assert!((below - above).abs() <= 1e-9 * below.max(1.0));
    }
}

#[test]
fn fold_failures_carry_the_fold_index() {
    let mut rng = Rng::new(43);
    let good = example("s0", &mut rng);
    let mut bad = example("s1", &mut rng);
    bad.ppg.pop(); // wrong segment length, only in s1's data

    let eval_data = vec![example("eval", &mut rng)];
    // Fold 0 withholds s0 and therefore trains on the malformed s1 data.
    let err = kfold_confidence(
        &spec(3),
        NormStats::identity(),
        &[good, bad],
        &plan(&[("s0", 0), ("s1", 1)], 2),
        &quick_config(1, 1e-3),
        &eval_data,
    )
    .unwrap_err();
    match err {
        Error::Fold { fold, source } => {
            assert_eq!(fold, 0);
            assert!(matches!(*source, Error::DataMismatch(_)));
        }
        other => panic!("expected Fold error, got {other:?}"),
    }
}

#[test]
fn inputs_are_validated_before_any_training() {
    let mut rng = Rng::new(44);
    let train_data = vec![example("known", &mut rng), example("stranger", &mut rng)];
    let eval_data = vec![example("eval", &mut rng)];

    // A training subject missing from the plan is a data mismatch.
    match kfold_confidence(
        &spec(3),
        NormStats::identity(),
        &train_data,
        &plan(&[("known", 0), ("other", 1)], 2),
        &quick_config(1, 1e-3),
        &eval_data,
    ) {
        Err(Error::DataMismatch(msg)) => assert!(msg.contains("stranger")),
        other => panic!("expected DataMismatch, got {other:?}"),
    }

    // Fewer than two folds cannot produce a spread.
    assert!(matches!(
        kfold_confidence(
            &spec(3),
            NormStats::identity(),
            &train_data[..1],
            &plan(&[("known", 0)], 1),
            &quick_config(1, 1e-3),
            &eval_data,
        ),
        Err(Error::InvalidConfig(_))
    ));

    // An empty evaluation set has nothing to bracket.
    assert!(matches!(
        kfold_confidence(
            &spec(3),
            NormStats::identity(),
            &train_data,
            &plan(&[("known", 0), ("stranger", 1)], 2),
            &quick_config(1, 1e-3),
            &[],
        ),
        Err(Error::DataMismatch(_))
    ));
}

#[test]
fn ten_fold_intervals_cover_most_noiseless_labels() {
    let cohort = generate_cohort(&SynthConfig {
        n_subjects: 12,
        segments_per_subject: (6, 6),
        seed: 0xC0FE,
        segment_length: L,
        emit_abp: false,
        ..SynthConfig::default()
    })
    .unwrap();
    let ds = &cohort.dataset;
    let norm = NormStats::from_subjects(&ds.subjects).unwrap();
    let data = build_examples(ds, &all_indices(ds), Target::Sbp, &norm, false).unwrap();

    // Sidecar rows align with dataset segments and carry the labels
    // before measurement noise was added.
    assert_eq!(cohort.sidecar.records.len(), data.len());
    for (truth, ex) in cohort.sidecar.records.iter().zip(&data) {
        assert_eq!(truth.subject_id, ex.subject_id);
        assert_eq!(truth.sbp_label as f32, ex.label);
    }

    let folds = build_folds(ds, 10, 99).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 150,
        optimizer: AdamConfig {
            lr: 2e-2,
            weight_decay: 0.0,
            ..AdamConfig::default()
        },
        shuffle_seed: 11,
    };
    let intervals =
        kfold_confidence(&spec(0xF01D), norm, &data, &folds, &cfg, &data).unwrap();

    let covered = intervals
        .iter()
        .zip(&cohort.sidecar.records)
        .filter(|(iv, truth)| iv.covers(truth.sbp_clean))
        .count();
    let fraction = covered as f64 / intervals.len() as f64;
    assert!(
        fraction >= 0.8,
        "only {covered}/{} intervals covered the noiseless label",
        intervals.len()
    );
}
