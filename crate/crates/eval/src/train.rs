//! Mini-batch training loop and batched inference.

use pulsebench_core::rng::Rng;
use pulsebench_nn::{adam_step, AdamConfig, AdamState, Model};

use crate::data::Example;
use crate::error::{Error, Result};

/// Stream constant separating epoch shuffles from every other seeded
/// consumer of the run seed.
const SHUFFLE_STREAM: u64 = 21;

/// Inference chunk size. Eval-mode forward passes are row-independent, so
/// the chunking is invisible in the results; this only bounds memory.
const PREDICT_BATCH: usize = 64;

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Segments per optimizer step; a trailing short batch is still used.
    pub batch_size: usize,
    /// Full passes over the training set.
    pub epochs: usize,
    pub optimizer: AdamConfig,
    /// Seed for the per-epoch example shuffle.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 100,
            optimizer: AdamConfig::default(),
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

fn check_examples(model: &Model, data: &[Example]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::DataMismatch("example list is empty".into()));
    }
    let want = model.spec.input_length;
    let multimodal = model.spec.use_demographics;
    for ex in data {
        if ex.ppg.len() != want {
            return Err(Error::DataMismatch(format!(
                "subject {}: segment has {} samples, model expects {}",
                ex.subject_id,
                ex.ppg.len(),
                want
            )));
        }
        if multimodal && ex.demo.is_none() {
            return Err(Error::DataMismatch(format!(
                "subject {}: fusion model needs demographic features",
                ex.subject_id
            )));
        }
    }
    Ok(())
}

/// Packs the examples at `order[range]` into flat batch buffers.
fn pack_batch(
    data: &[Example],
    picks: &[usize],
    multimodal: bool,
) -> (Vec<f32>, Option<Vec<f32>>, Vec<f32>) {
    let length = data[picks[0]].ppg.len();
    let mut ppg = Vec::with_capacity(picks.len() * length);
    let mut demos = if multimodal {
        Some(Vec::with_capacity(picks.len() * 3))
    } else {
        None
    };
    let mut labels = Vec::with_capacity(picks.len());
    for &i in picks {
        let ex = &data[i];
        ppg.extend_from_slice(&ex.ppg);
        if let Some(buf) = demos.as_mut() {
            buf.extend_from_slice(&ex.demo.expect("checked above"));
        }
        labels.push(ex.label);
    }
    (ppg, demos, labels)
}

/// Trains `model` in place and returns the mean training loss per epoch.
///
/// Each epoch reshuffles the examples with a seed derived from
/// `shuffle_seed` and the epoch index, walks them in batches of
/// `batch_size` (the last batch may be short), and applies one Adam update
/// per batch. A non-finite loss aborts the run with a diagnostic naming
/// the offending batch. The whole procedure is deterministic: identical
/// model, data, and config produce bit-identical parameters and history.
pub fn train(model: &mut Model, data: &[Example], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_examples(model, data)?;

    let multimodal = model.spec.use_demographics;
    let mut adam = AdamState::new(&model.params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = Rng::new(Rng::derive_seed(cfg.shuffle_seed, SHUFFLE_STREAM, epoch as u64));
        for (i, slot) in order.iter_mut().enumerate() {
            *slot = i;
        }
        rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for (step, picks) in order.chunks(cfg.batch_size).enumerate() {
            let (ppg, demos, labels) = pack_batch(data, picks, multimodal);
            let out = model.train_batch(&ppg, picks.len(), demos.as_deref(), &labels)?;
            if !out.loss.is_finite() {
                let subjects: Vec<&str> =
                    picks.iter().map(|&i| data[i].subject_id.as_str()).collect();
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    loss: out.loss,
                    subjects: subjects.join(","),
                });
            }
            adam_step(&mut model.params, &out.grads, &mut adam, &cfg.optimizer)?;
            loss_sum += out.loss * picks.len() as f64;
        }
        history.push(loss_sum / data.len() as f64);
    }
    Ok(history)
}

/// Runs eval-mode inference over `data`, preserving order.
pub fn predict(model: &Model, data: &[Example]) -> Result<Vec<f64>> {
    check_examples(model, data)?;
    let multimodal = model.spec.use_demographics;
    let mut out = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for picks in indices.chunks(PREDICT_BATCH) {
        let (ppg, demos, _) = pack_batch(data, picks, multimodal);
        let preds = model.predict_batch(&ppg, picks.len(), demos.as_deref())?;
        for (&i, &p) in picks.iter().zip(&preds) {
            if !p.is_finite() {
                return Err(Error::NonFinitePrediction {
                    subject_id: data[i].subject_id.clone(),
                });
            }
            out.push(p as f64);
        }
    }
    Ok(out)
}
