use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cnn::{Architecture, CnnModel};
use super::corpus::Sample;
use crate::error::{Error, Result};

/// Plain mini-batch SGD on binary cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// L2 penalty on the weights (biases excluded), added to the loss as
    /// `weight_decay / 2 * |w|^2`.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.04,
            batch_size: 8,
            weight_decay: 0.01,
            seed: 1,
        }
    }
}

fn mean_loss(model: &CnnModel, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += model.loss(&s.input, s.label)?;
    }
    Ok(total / samples.len() as f64)
}

/// Trains a freshly initialized model. Deterministic for a given dataset
/// and seed; single-threaded.
pub fn train_cnn(samples: &[Sample], arch: Architecture, hp: &Hyperparams) -> Result<CnnModel> {
    let positives = samples.iter().filter(|s| s.label).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::config(
            "dataset",
            format!(
                "needs both classes, got {positives} positive of {}",
                samples.len()
            ),
        ));
    }
    if hp.batch_size == 0 {
        return Err(Error::config("batch_size", "must be positive"));
    }
    if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
        return Err(Error::config(
            "learning_rate",
            "must be finite and positive",
        ));
    }
    if !(hp.weight_decay >= 0.0 && hp.weight_decay.is_finite()) {
        return Err(Error::config("weight_decay", "must be finite and >= 0"));
    }

    let mut model = CnnModel::init(arch, hp.seed)?;
    model.metadata.epochs = hp.epochs;
    model.metadata.learning_rate = hp.learning_rate;
    model.metadata.batch_size = hp.batch_size;
    model.metadata.weight_decay = hp.weight_decay;
    model.metadata.initial_loss = Some(mean_loss(&model, samples)?);

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = vec![0.0; model.params().len()];
    let decayed = model.weight_mask();
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hp.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let s = &samples[i];
                epoch_loss += model.accumulate_gradient(&s.input, s.label, &mut grad)?;
            }
            let step = hp.learning_rate / batch.len() as f64;
            let decay = hp.learning_rate * hp.weight_decay;
            for ((p, g), &w) in model.params_mut().iter_mut().zip(&grad).zip(&decayed) {
                *p -= step * g + if w { decay * *p } else { 0.0 };
            }
        }
        model
            .metadata
            .loss_curve
            .push(epoch_loss / samples.len() as f64);
    }
    Ok(model)
}

/// Fraction of samples whose thresholded prediction matches the label.
pub fn evaluate(model: &CnnModel, samples: &[Sample], threshold: f64) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut correct = 0usize;
    for s in samples {
        let p = model.predict_with_threshold(&s.input, threshold)?;
        if p.decision() == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
