//! Mini-batch gradient descent with the fixed training recipe.

use super::{cross_entropy, CnnModel, DropoutMasks, Gradients, ShapeError};
use crate::cohort::BinaryLabel;
use crate::rng::{item_rng, stream_rng, Stream};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Training recipe: learning rate 1e-3, batch size 24, 180 epochs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 24,
            epochs: 180,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Dropout-free accuracy over the training examples at epoch end.
    pub train_accuracy: f64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss or gradient at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("cohort is empty")]
    Empty,
    #[error("batch size must be positive")]
    ZeroBatch,
}

/// Trains in place: shuffled mini-batches (the final short batch is kept),
/// plain gradient descent on the batch-mean gradient, constant learning
/// rate.
///
/// Fully deterministic given `(seed, example order)`: shuffling and dropout
/// draw from named sub-streams, per-example mask seeds are drawn before the
/// batch is dispatched, and per-example gradients are reduced in example
/// order no matter how many workers computed them.
pub fn train(
    model: &mut CnnModel,
    inputs: &[Vec<f64>],
    labels: &[BinaryLabel],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    if inputs.is_empty() || labels.len() != inputs.len() {
        return Err(TrainError::Empty);
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::ZeroBatch);
    }
    for x in inputs {
        if x.len() != model.spec.input_length {
            return Err(ShapeError::InputMismatch {
                expected: model.spec.input_length,
                actual: x.len(),
            }
            .into());
        }
    }

    let mut shuffle_rng = stream_rng(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = stream_rng(cfg.seed, Stream::Dropout);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;

        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mask_seeds: Vec<u64> = batch.iter().map(|_| dropout_rng.random()).collect();

            let per_example: Vec<(f64, Gradients)> = batch
                .par_iter()
                .zip(mask_seeds.par_iter())
                .map(|(&i, &mask_seed)| {
                    let mut rng = item_rng(mask_seed);
                    let masks = DropoutMasks::sample(&model.spec, &mut rng);
                    let pass = model.forward(&inputs[i], Some(&masks)).expect("checked shape");
                    let loss = cross_entropy(&pass.probs, labels[i]);
                    let grads = model.backward(&pass, labels[i], Some(&masks));
                    (loss, grads)
                })
                .collect();

            // Reduce in example order for bitwise determinism.
            let mut total = Gradients::zeros_like(model);
            let mut batch_loss = 0.0;
            for (loss, g) in &per_example {
                batch_loss += loss;
                total.add_assign(g);
            }
            if !batch_loss.is_finite() || !total.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: batch_no,
                });
            }
            loss_sum += batch_loss;

            let step = cfg.learning_rate / batch.len() as f64;
            for (params, grads) in model.param_segments_mut().into_iter().zip(&total.segs) {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= step * g;
                }
            }
        }

        let correct: usize = inputs
            .par_iter()
            .zip(labels.par_iter())
            .map(|(x, &y)| usize::from(model.predict(x).expect("checked shape") == y))
            .sum();
        log.push(EpochLog {
            epoch,
            mean_loss: loss_sum / inputs.len() as f64,
            train_accuracy: correct as f64 / inputs.len() as f64,
        });
    }
    Ok(log)
}
