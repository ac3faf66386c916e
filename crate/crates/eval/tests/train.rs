//! Training-loop behaviour: determinism, divergence handling, inference
//! ordering, and a small end-to-end overfit run.

use pulsebench_core::rng::Rng;
use pulsebench_core::synth::{generate_cohort, SynthConfig};
use pulsebench_eval::{all_indices, build_examples, predict, train, Error, Example, TrainConfig};
use pulsebench_nn::{AdamConfig, Backbone, Model, ModelSpec, NormStats, Target};

const L: usize = 32;

fn spec(seed: u64, use_demographics: bool) -> ModelSpec {
    ModelSpec {
        backbone: Backbone::LeNet1d,
        use_demographics,
        target: Target::Sbp,
        input_length: L,
        seed,
    }
}

fn toy_examples(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| Example {
            subject_id: format!("subj{:02}", i % 7),
            ppg: (0..L).map(|_| rng.uniform(0.0, 1.0) as f32).collect(),
            demo: None,
            label: rng.uniform(90.0, 140.0) as f32,
        })
        .collect()
}

fn quick_config(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs,
        optimizer: AdamConfig {
            lr,
            weight_decay: 0.0,
            ..AdamConfig::default()
        },
        shuffle_seed: 3,
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let mut model = Model::new(spec(11, false), NormStats::identity()).unwrap();
    let before = model.params.clone();
    let data = toy_examples(10, 5);
    let history = train(&mut model, &data, &quick_config(2, 0.0)).unwrap();
    assert_eq!(history.len(), 2);
    assert!(history.iter().all(|l| l.is_finite()));
    assert_eq!(model.params, before);
    // Both epochs see the same parameters; the only difference is how the
    // reshuffle groups examples into batches, which perturbs the 32-bit
    // batch means in the last few ulps.
    assert!((history[0] - history[1]).abs() <= 1e-5 * history[0]);
}

#[test]
fn identical_runs_reproduce_bit_for_bit() {
    let data = toy_examples(13, 5);
    let cfg = quick_config(3, 1e-3);

    let mut a = Model::new(spec(11, false), NormStats::identity()).unwrap();
    let mut b = Model::new(spec(11, false), NormStats::identity()).unwrap();
    let ha = train(&mut a, &data, &cfg).unwrap();
    let hb = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a.params, b.params);
    assert_eq!(a.state, b.state);

    // A different shuffle seed visits batches in a different order.
    let mut c = Model::new(spec(11, false), NormStats::identity()).unwrap();
    let hc = train(
        &mut c,
        &data,
        &TrainConfig {
            shuffle_seed: 4,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_ne!(ha, hc);
}

#[test]
fn training_loss_decreases_on_a_small_set() {
    let data = toy_examples(12, 9);
    let mut model = Model::new(spec(2, false), NormStats::identity()).unwrap();
    let history = train(&mut model, &data, &quick_config(30, 5e-3)).unwrap();
    assert!(
        history.last().unwrap() < history.first().unwrap(),
        "loss failed to decrease: {history:?}"
    );
}

#[test]
fn trailing_short_batch_is_still_trained() {
    // 5 examples at batch size 4: the second step has a single example.
    let data = toy_examples(5, 21);
    let mut model = Model::new(spec(8, false), NormStats::identity()).unwrap();
    let before = model.params.clone();
    let history = train(&mut model, &data, &quick_config(1, 1e-3)).unwrap();
    assert_eq!(history.len(), 1);
    assert_ne!(model.params, before);
}

#[test]
fn divergence_aborts_with_a_named_batch() {
    let mut data = toy_examples(6, 5);
    for ex in &mut data {
        // Squared errors against this label overflow 32-bit range at once.
        ex.label = 1e30;
    }
    let mut model = Model::new(spec(11, false), NormStats::identity()).unwrap();
    match train(&mut model, &data, &quick_config(1, 1e-3)) {
        Err(Error::NonFiniteLoss {
            epoch,
            step,
            loss,
            subjects,
        }) => {
            assert_eq!(epoch, 0);
            assert_eq!(step, 0);
            assert!(!loss.is_finite());
            assert!(subjects.contains("subj"));
        }
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

#[test]
fn prediction_is_order_preserving_and_chunk_invariant() {
    // More examples than the internal inference chunk, to cross a boundary.
    let data = toy_examples(70, 33);
    let model = Model::new(spec(13, false), NormStats::identity()).unwrap();
    let forward = predict(&model, &data).unwrap();
    assert_eq!(forward.len(), 70);

    let reversed: Vec<Example> = data.iter().rev().cloned().collect();
    let backward = predict(&model, &reversed).unwrap();
    for (i, p) in backward.iter().rev().enumerate() {
        assert_eq!(forward[i].to_bits(), p.to_bits());
    }

    // Duplicated rows predict identically.
    let twice: Vec<Example> = data.iter().chain(data.iter()).cloned().collect();
    let doubled = predict(&model, &twice).unwrap();
    for i in 0..70 {
        assert_eq!(doubled[i].to_bits(), doubled[i + 70].to_bits());
    }
}

#[test]
fn mismatched_examples_are_rejected() {
    let model = Model::new(spec(4, false), NormStats::identity()).unwrap();
    assert!(matches!(predict(&model, &[]), Err(Error::DataMismatch(_))));

    let mut short = toy_examples(3, 5);
    short[1].ppg.pop();
    assert!(matches!(
        predict(&model, &short),
        Err(Error::DataMismatch(_))
    ));

    let fusion = Model::new(spec(4, true), NormStats::identity()).unwrap();
    let no_demo = toy_examples(3, 5);
    match predict(&fusion, &no_demo) {
        Err(Error::DataMismatch(msg)) => assert!(msg.contains("demographic")),
        other => panic!("expected DataMismatch, got {other:?}"),
    }
}

#[test]
fn config_bounds_are_enforced() {
    let data = toy_examples(4, 5);
    let mut model = Model::new(spec(4, false), NormStats::identity()).unwrap();
    let bad_batch = TrainConfig {
        batch_size: 0,
        ..quick_config(1, 1e-3)
    };
    assert!(matches!(
        train(&mut model, &data, &bad_batch),
        Err(Error::InvalidConfig(_))
    ));
    let bad_epochs = TrainConfig {
        epochs: 0,
        ..quick_config(1, 1e-3)
    };
    assert!(matches!(
        train(&mut model, &data, &bad_epochs),
        Err(Error::InvalidConfig(_))
    ));
    let bad_adam = TrainConfig {
        optimizer: AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        },
        ..quick_config(1, 1e-3)
    };
    assert!(matches!(
        train(&mut model, &data, &bad_adam),
        Err(Error::Nn(_))
    ));
}

#[test]
fn fusion_lenet_overfits_a_64_segment_cohort() {
    let cohort = generate_cohort(&SynthConfig {
        n_subjects: 8,
        segments_per_subject: (8, 8),
        seed: 0x0F17,
        segment_length: L,
        emit_abp: false,
        ..SynthConfig::default()
    })
    .unwrap();
    let ds = &cohort.dataset;
    assert_eq!(ds.segments.len(), 64);

    let norm = NormStats::from_subjects(&ds.subjects).unwrap();
    let data = build_examples(ds, &all_indices(ds), Target::Sbp, &norm, true).unwrap();

    let labels: Vec<f64> = data.iter().map(|e| e.label as f64).collect();
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let label_variance =
        labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / labels.len() as f64;

    let mut model = Model::new(spec(0xA11CE, true), norm).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 2000,
        optimizer: AdamConfig {
            lr: 2e-2,
            weight_decay: 0.0,
            ..AdamConfig::default()
        },
        shuffle_seed: 5,
    };
    let history = train(&mut model, &data, &cfg).unwrap();
    let final_mse = *history.last().unwrap();
    assert!(
        final_mse < 0.05 * label_variance,
        "final training mse {final_mse} is not under 5% of label variance {label_variance}"
    );
}
