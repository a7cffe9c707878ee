//! Classifier head for scattering features: two 20-unit sigmoid dense
//! layers into a 2-node softmax output, trained full-batch by scaled
//! conjugate gradient (conjugate directions with finite-difference
//! Hessian-vector estimates and adaptive lambda regularization) under the
//! cross-entropy loss.

use crate::cohort::BinaryLabel;
use crate::metrics::MIN_P;
use crate::rng::{stream_rng, Stream};
use rand::Rng;
use thiserror::Error;

/// Per-coordinate z-scoring with statistics taken from the training cohort
/// only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &[Vec<f64>]) -> Standardizer {
        let n = data.len().max(1);
        let d = data.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; d];
        for row in data {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut var = vec![0.0; d];
        for row in data {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        let std = var.iter().map(|&v| v.sqrt().max(1e-12)).collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Sigmoid-sigmoid-softmax network over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StHead {
    pub in_dim: usize,
    pub hidden: [usize; 2],
    pub out_dim: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum StTrainError {
    #[error("non-finite loss at SCG iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("empty training set")]
    Empty,
    #[error("feature width {actual} does not match head input {expected}")]
    DimMismatch { expected: usize, actual: usize },
}

impl StHead {
    pub fn param_count(in_dim: usize, hidden: [usize; 2], out_dim: usize) -> usize {
        hidden[0] * in_dim
            + hidden[0]
            + hidden[1] * hidden[0]
            + hidden[1]
            + out_dim * hidden[1]
            + out_dim
    }

    /// Seeded scaled-uniform init; an all-zero start would leave hidden
    /// units permanently symmetric under full-batch training.
    pub fn init(in_dim: usize, seed: u64) -> StHead {
        let hidden = [20, 20];
        let out_dim = 2;
        let mut rng = stream_rng(seed, Stream::Init);
        let mut params = vec![0.0; Self::param_count(in_dim, hidden, out_dim)];
        let mut offset = 0;
        for (fan_in, fan_out) in [
            (in_dim, hidden[0]),
            (hidden[0], hidden[1]),
            (hidden[1], out_dim),
        ] {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in params[offset..offset + fan_out * fan_in].iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
            offset += fan_out * fan_in + fan_out; // biases stay zero
        }
        StHead {
            in_dim,
            hidden,
            out_dim,
            params,
        }
    }

    pub fn zeroed(in_dim: usize) -> StHead {
        let hidden = [20, 20];
        StHead {
            in_dim,
            hidden,
            out_dim: 2,
            params: vec![0.0; Self::param_count(in_dim, hidden, 2)],
        }
    }

    fn segments(&self) -> [(usize, usize); 6] {
        let (h1, h2, o) = (self.hidden[0], self.hidden[1], self.out_dim);
        let w1 = h1 * self.in_dim;
        let w2 = h2 * h1;
        let w3 = o * h2;
        let mut offset = 0;
        let mut next = |len: usize| {
            let seg = (offset, len);
            offset += len;
            seg
        };
        [next(w1), next(h1), next(w2), next(h2), next(w3), next(o)]
    }

    /// Probabilities `[positive, negative]`.
    pub fn probabilities(&self, x: &[f64]) -> [f64; 2] {
        let logits = self.forward_logits(&self.params, x).0;
        crate::nn::softmax2(&logits)
    }

    pub fn predict(&self, x: &[f64]) -> BinaryLabel {
        let p = self.probabilities(x);
        if p[0] >= p[1] {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        }
    }

    fn forward_logits(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let [s_w1, s_b1, s_w2, s_b2, s_w3, s_b3] = self.segments();
        let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
        let (h1, h2, o) = (self.hidden[0], self.hidden[1], self.out_dim);

        let a1: Vec<f64> = (0..h1)
            .map(|u| {
                let row = &params[s_w1.0 + u * self.in_dim..s_w1.0 + (u + 1) * self.in_dim];
                sigmoid(
                    params[s_b1.0 + u] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>(),
                )
            })
            .collect();
        let a2: Vec<f64> = (0..h2)
            .map(|u| {
                let row = &params[s_w2.0 + u * h1..s_w2.0 + (u + 1) * h1];
                sigmoid(
                    params[s_b2.0 + u] + row.iter().zip(&a1).map(|(w, v)| w * v).sum::<f64>(),
                )
            })
            .collect();
        let logits: Vec<f64> = (0..o)
            .map(|u| {
                let row = &params[s_w3.0 + u * h2..s_w3.0 + (u + 1) * h2];
                params[s_b3.0 + u] + row.iter().zip(&a2).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        (logits, a1, a2)
    }

    /// Full-batch mean cross-entropy and its gradient at `params`.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        inputs: &[Vec<f64>],
        labels: &[BinaryLabel],
    ) -> (f64, Vec<f64>) {
        let [s_w1, s_b1, s_w2, s_b2, s_w3, s_b3] = self.segments();
        let (h1, h2, o) = (self.hidden[0], self.hidden[1], self.out_dim);
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let scale = 1.0 / inputs.len() as f64;

        for (x, &label) in inputs.iter().zip(labels) {
            let (logits, a1, a2) = self.forward_logits(params, x);
            let probs = crate::nn::softmax2(&logits);
            let p_true = match label {
                BinaryLabel::Positive => probs[0],
                BinaryLabel::Negative => probs[1],
            };
            loss -= scale * p_true.max(MIN_P).ln();

            let mut dlogits = [probs[0], probs[1]];
            match label {
                BinaryLabel::Positive => dlogits[0] -= 1.0,
                BinaryLabel::Negative => dlogits[1] -= 1.0,
            }

            let mut da2 = vec![0.0; h2];
            for u in 0..o {
                grad[s_b3.0 + u] += scale * dlogits[u];
                for v in 0..h2 {
                    grad[s_w3.0 + u * h2 + v] += scale * dlogits[u] * a2[v];
                    da2[v] += params[s_w3.0 + u * h2 + v] * dlogits[u];
                }
            }
            let mut da1 = vec![0.0; h1];
            for u in 0..h2 {
                let dz = da2[u] * a2[u] * (1.0 - a2[u]);
                grad[s_b2.0 + u] += scale * dz;
                for v in 0..h1 {
                    grad[s_w2.0 + u * h1 + v] += scale * dz * a1[v];
                    da1[v] += params[s_w2.0 + u * h1 + v] * dz;
                }
            }
            for u in 0..h1 {
                let dz = da1[u] * a1[u] * (1.0 - a1[u]);
                grad[s_b1.0 + u] += scale * dz;
                for v in 0..self.in_dim {
                    grad[s_w1.0 + u * self.in_dim + v] += scale * dz * x[v];
                }
            }
        }
        (loss, grad)
    }
}

/// SCG training outcome: per-iteration loss plus the final training
/// accuracy.
#[derive(Debug, Clone)]
pub struct ScgOutcome {
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
}

/// Scaled conjugate gradient, one full-batch iteration per epoch.
pub fn train_scg(
    head: &mut StHead,
    inputs: &[Vec<f64>],
    labels: &[BinaryLabel],
    epochs: usize,
) -> Result<ScgOutcome, StTrainError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(StTrainError::Empty);
    }
    if inputs[0].len() != head.in_dim {
        return Err(StTrainError::DimMismatch {
            expected: head.in_dim,
            actual: inputs[0].len(),
        });
    }

    let n_params = head.params.len();
    let mut w = head.params.clone();
    let eval = |w: &[f64]| head.loss_and_grad(w, inputs, labels);

    let sigma0 = 1e-4;
    let mut lambda = 1e-6;
    let mut lambda_bar = 0.0;
    let (mut error, grad) = eval(&w);
    let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut p = r.clone();
    let mut success = true;
    let mut delta = 0.0;
    let mut s = vec![0.0; n_params];
    let mut losses = Vec::with_capacity(epochs);

    let norm_sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    for iteration in 0..epochs {
        if !error.is_finite() {
            return Err(StTrainError::NonFinite { iteration });
        }
        let p_norm_sq = norm_sq(&p);
        if p_norm_sq.sqrt() < 1e-15 {
            // Gradient vanished (e.g. a perfectly fit or perfectly
            // symmetric start): nothing left to do.
            losses.push(error);
            continue;
        }

        if success {
            // Second-order information along p via finite differences.
            let sigma = sigma0 / p_norm_sq.sqrt();
            let w_probe: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + sigma * pi).collect();
            let (_, grad_probe) = eval(&w_probe);
            for i in 0..n_params {
                // grad(w) is -r, so this is (grad(w + sigma p) - grad(w)) / sigma.
                s[i] = (grad_probe[i] + r[i]) / sigma;
            }
            delta = dot(&p, &s);
        }

        delta += (lambda - lambda_bar) * p_norm_sq;
        if delta <= 0.0 {
            // Make the Hessian estimate positive definite.
            lambda_bar = 2.0 * (lambda - delta / p_norm_sq);
            delta = -delta + lambda * p_norm_sq;
            lambda = lambda_bar;
        }

        let mu = dot(&p, &r);
        let alpha = mu / delta;
        let w_new: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + alpha * pi).collect();
        let (error_new, grad_new) = eval(&w_new);
        let comparison = 2.0 * delta * (error - error_new) / (mu * mu);

        if comparison >= 0.0 {
            // Successful step.
            w = w_new;
            error = error_new;
            let r_new: Vec<f64> = grad_new.iter().map(|g| -g).collect();
            lambda_bar = 0.0;
            success = true;
            if (iteration + 1) % n_params == 0 {
                p = r_new.clone(); // restart along the gradient
            } else {
                let beta = (norm_sq(&r_new) - dot(&r_new, &r)) / mu;
                for i in 0..n_params {
                    p[i] = r_new[i] + beta * p[i];
                }
            }
            r = r_new;
            if comparison >= 0.75 {
                lambda *= 0.25;
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if comparison < 0.25 {
            lambda += delta * (1.0 - comparison) / p_norm_sq;
        }
        lambda = lambda.clamp(1e-20, 1e100);
        losses.push(error);
    }

    head.params = w;
    let correct = inputs
        .iter()
        .zip(labels)
        .filter(|(x, &y)| head.predict(x) == y)
        .count();
    Ok(ScgOutcome {
        losses,
        train_accuracy: correct as f64 / inputs.len() as f64,
    })
}
