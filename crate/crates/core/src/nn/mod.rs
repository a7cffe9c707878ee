//! A self-contained 1-D convolutional network in 64-bit floats.
//!
//! The architecture is fixed by the input length: a stack of convolution
//! blocks (each a stride-1 then a stride-2 convolution, 10 filters of kernel
//! 8, bias and ReLU after every layer, "same" zero padding with output
//! length `ceil(n/stride)`), two dense layers of 20 units, and a 2-node
//! softmax output. Dropout (p = 0.5, inverted scaling) applies to the last
//! convolution block's output and to both dense layers during training.
//!
//! Everything here is deterministic: initialization, dropout masks, and
//! shuffling draw from named seed streams, and batch gradients are reduced
//! in a fixed order regardless of worker count.

mod io;
mod train;

pub use io::{load_model, load_model_for_input, save_model, FormatError, MODEL_MAGIC};
pub use train::{train, EpochLog, TrainConfig, TrainError};

use crate::cohort::BinaryLabel;
use crate::rng::{stream_rng, Stream};
use rand::Rng;
use thiserror::Error;

pub const FILTERS: usize = 10;
pub const KERNEL: usize = 8;
pub const DENSE_UNITS: usize = 20;
pub const N_OUTPUTS: usize = 2;
pub const DROPOUT_P: f64 = 0.5;
/// Floor on the true-class probability inside the loss, keeping it finite.
pub const CROSS_ENTROPY_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("unsupported input length {0}: expected one of 120, 480, 1200, 2400")]
    UnsupportedInputLength(usize),
    #[error("input has {actual} samples, model expects {expected}")]
    InputMismatch { expected: usize, actual: usize },
    #[error("input is empty")]
    Empty,
}

/// Network shape derived from the input length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchitectureSpec {
    pub input_length: usize,
    pub n_blocks: usize,
    pub filters: usize,
    pub kernel: usize,
    pub dense_sizes: [usize; 2],
    pub n_outputs: usize,
    pub dropout_p: f64,
}

impl ArchitectureSpec {
    /// Block count by input length: 120 -> 3, 480 -> 4, 1200 -> 5, 2400 -> 6.
    pub fn for_input(input_length: usize) -> Result<Self, ShapeError> {
        let n_blocks = match input_length {
            120 => 3,
            480 => 4,
            1200 => 5,
            2400 => 6,
            other => return Err(ShapeError::UnsupportedInputLength(other)),
        };
        Ok(ArchitectureSpec {
            input_length,
            n_blocks,
            filters: FILTERS,
            kernel: KERNEL,
            dense_sizes: [DENSE_UNITS, DENSE_UNITS],
            n_outputs: N_OUTPUTS,
            dropout_p: DROPOUT_P,
        })
    }

    /// Temporal lengths before each block and after the last one; each block
    /// halves with ceiling division.
    pub fn temporal_lengths(&self) -> Vec<usize> {
        let mut lengths = vec![self.input_length];
        for _ in 0..self.n_blocks {
            let last = *lengths.last().unwrap();
            lengths.push(last.div_ceil(2));
        }
        lengths
    }

    /// Length of the last block's output.
    pub fn block_output_len(&self) -> usize {
        *self.temporal_lengths().last().unwrap()
    }

    /// Flattened size feeding the first dense layer.
    pub fn flattened(&self) -> usize {
        self.block_output_len() * self.filters
    }
}

/// Channel-major 1-D activation tensor: `data[c * len + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations1d {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Activations1d {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Activations1d {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn from_single_channel(x: &[f64]) -> Self {
        Activations1d {
            channels: 1,
            len: x.len(),
            data: x.to_vec(),
        }
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.len + t]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }
}

/// 1-D convolution layer (cross-correlation) with "same" zero padding and
/// output length `ceil(n / stride)`. Weight layout: `[filter][tap][in_ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
    pub in_channels: usize,
    pub stride: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(filters: usize, kernel: usize, in_channels: usize, stride: usize) -> Self {
        ConvLayer {
            filters,
            kernel,
            in_channels,
            stride,
            weights: vec![0.0; filters * kernel * in_channels],
            bias: vec![0.0; filters],
        }
    }

    #[inline]
    fn w(&self, f: usize, q: usize, c: usize) -> f64 {
        self.weights[(f * self.kernel + q) * self.in_channels + c]
    }

    pub fn output_len(&self, n: usize) -> usize {
        n.div_ceil(self.stride)
    }

    /// Left padding under the "same" rule: total pad is
    /// `(out-1)*stride + kernel - n`, split floor-left (3 left / 4 right for
    /// kernel 8 at stride 1).
    fn pad_left(&self, n: usize) -> usize {
        let out = self.output_len(n);
        let total = ((out - 1) * self.stride + self.kernel).saturating_sub(n);
        total / 2
    }

    /// Pre-activation output (bias added, no ReLU).
    pub fn forward(&self, x: &Activations1d) -> Result<Activations1d, ShapeError> {
        if x.len == 0 {
            return Err(ShapeError::Empty);
        }
        debug_assert_eq!(x.channels, self.in_channels);
        let n = x.len;
        let out_len = self.output_len(n);
        let pad = self.pad_left(n) as isize;
        let mut out = Activations1d::zeros(self.filters, out_len);
        for f in 0..self.filters {
            let dst = &mut out.data[f * out_len..(f + 1) * out_len];
            for v in dst.iter_mut() {
                *v = self.bias[f];
            }
            for c in 0..self.in_channels {
                let src = &x.data[c * n..(c + 1) * n];
                for q in 0..self.kernel {
                    let w = self.w(f, q, c);
                    if w == 0.0 {
                        continue;
                    }
                    for (m, v) in dst.iter_mut().enumerate() {
                        let p = (m * self.stride) as isize + q as isize - pad;
                        if p >= 0 && (p as usize) < n {
                            *v += w * src[p as usize];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Backprop through the layer: returns the input gradient and
    /// accumulates weight/bias gradients.
    fn backward(
        &self,
        x: &Activations1d,
        dz: &Activations1d,
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Activations1d {
        let n = x.len;
        let out_len = dz.len;
        let pad = self.pad_left(n) as isize;
        let mut dx = Activations1d::zeros(self.in_channels, n);
        for f in 0..self.filters {
            let g = &dz.data[f * out_len..(f + 1) * out_len];
            db[f] += g.iter().sum::<f64>();
            for c in 0..self.in_channels {
                let src = &x.data[c * n..(c + 1) * n];
                let dsrc = &mut dx.data[c * n..(c + 1) * n];
                for q in 0..self.kernel {
                    let w = self.w(f, q, c);
                    let widx = (f * self.kernel + q) * self.in_channels + c;
                    let mut acc = 0.0;
                    for (m, &gm) in g.iter().enumerate() {
                        let p = (m * self.stride) as isize + q as isize - pad;
                        if p >= 0 && (p as usize) < n {
                            acc += gm * src[p as usize];
                            dsrc[p as usize] += w * gm;
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
        dx
    }
}

/// Fully connected layer; weight layout `[out][in]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        (0..self.out_dim)
            .map(|o| {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn backward(&self, x: &[f64], dz: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            db[o] += dz[o];
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let drow = &mut dw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                drow[i] += dz[o] * x[i];
                dx[i] += row[i] * dz[o];
            }
        }
        dx
    }
}

/// One convolution block: stride-1 conv then stride-2 conv, ReLU after each.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv_s1: ConvLayer,
    pub conv_s2: ConvLayer,
}

/// Per-example dropout masks, `true` = keep. Inverted dropout divides kept
/// activations by `1 - p` at train time so inference needs no rescaling.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub last_conv: Vec<bool>,
    pub dense1: Vec<bool>,
    pub dense2: Vec<bool>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(spec: &ArchitectureSpec, rng: &mut R) -> Self {
        let p = spec.dropout_p;
        let mut draw = |n: usize| (0..n).map(|_| rng.random::<f64>() >= p).collect();
        DropoutMasks {
            last_conv: draw(spec.flattened()),
            dense1: draw(spec.dense_sizes[0]),
            dense2: draw(spec.dense_sizes[1]),
        }
    }
}

/// The full model.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub spec: ArchitectureSpec,
    pub blocks: Vec<ConvBlock>,
    pub dense1: DenseLayer,
    pub dense2: DenseLayer,
    pub output: DenseLayer,
    pub rng_seed: u64,
}

impl CnnModel {
    /// Glorot-uniform weights (bound `sqrt(6 / (fan_in + fan_out))`), zero
    /// biases, drawn from the init stream of `seed`.
    pub fn init(spec: ArchitectureSpec, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Init);
        let mut model = Self::zeros(spec, seed);
        for block in &mut model.blocks {
            for conv in [&mut block.conv_s1, &mut block.conv_s2] {
                let fan_in = conv.kernel * conv.in_channels;
                let fan_out = conv.kernel * conv.filters;
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for w in conv.weights.iter_mut() {
                    *w = rng.random_range(-bound..bound);
                }
            }
        }
        for dense in [&mut model.dense1, &mut model.dense2, &mut model.output] {
            let bound = (6.0 / (dense.in_dim + dense.out_dim) as f64).sqrt();
            for w in dense.weights.iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
        }
        model
    }

    /// All-zero parameters (softmax then yields [0.5, 0.5] for any input).
    pub fn zeros(spec: ArchitectureSpec, seed: u64) -> Self {
        let blocks = (0..spec.n_blocks)
            .map(|b| {
                let in_ch = if b == 0 { 1 } else { spec.filters };
                ConvBlock {
                    conv_s1: ConvLayer::zeros(spec.filters, spec.kernel, in_ch, 1),
                    conv_s2: ConvLayer::zeros(spec.filters, spec.kernel, spec.filters, 2),
                }
            })
            .collect();
        CnnModel {
            spec,
            blocks,
            dense1: DenseLayer::zeros(spec.flattened(), spec.dense_sizes[0]),
            dense2: DenseLayer::zeros(spec.dense_sizes[0], spec.dense_sizes[1]),
            output: DenseLayer::zeros(spec.dense_sizes[1], spec.n_outputs),
            rng_seed: seed,
        }
    }

    /// Ordered parameter segments (the serialization and gradient order):
    /// per block conv-s1 weights/bias then conv-s2 weights/bias, then
    /// dense1, dense2, output.
    pub fn param_segments(&self) -> Vec<&[f64]> {
        let mut segs = Vec::new();
        for b in &self.blocks {
            segs.push(b.conv_s1.weights.as_slice());
            segs.push(b.conv_s1.bias.as_slice());
            segs.push(b.conv_s2.weights.as_slice());
            segs.push(b.conv_s2.bias.as_slice());
        }
        segs.push(self.dense1.weights.as_slice());
        segs.push(self.dense1.bias.as_slice());
        segs.push(self.dense2.weights.as_slice());
        segs.push(self.dense2.bias.as_slice());
        segs.push(self.output.weights.as_slice());
        segs.push(self.output.bias.as_slice());
        segs
    }

    pub fn param_segments_mut(&mut self) -> Vec<&mut [f64]> {
        let mut segs: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            segs.push(b.conv_s1.weights.as_mut_slice());
            segs.push(b.conv_s1.bias.as_mut_slice());
            segs.push(b.conv_s2.weights.as_mut_slice());
            segs.push(b.conv_s2.bias.as_mut_slice());
        }
        segs.push(self.dense1.weights.as_mut_slice());
        segs.push(self.dense1.bias.as_mut_slice());
        segs.push(self.dense2.weights.as_mut_slice());
        segs.push(self.dense2.bias.as_mut_slice());
        segs.push(self.output.weights.as_mut_slice());
        segs.push(self.output.bias.as_mut_slice());
        segs
    }

    pub fn param_count(&self) -> usize {
        self.param_segments().iter().map(|s| s.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ShapeError> {
        if x.len() != self.spec.input_length {
            return Err(ShapeError::InputMismatch {
                expected: self.spec.input_length,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Convolutional section only: the last block's post-ReLU output
    /// (`block_output_len x filters`), before any dropout.
    pub fn conv_section(&self, x: &[f64]) -> Result<Activations1d, ShapeError> {
        self.check_input(x)?;
        let mut act = Activations1d::from_single_channel(x);
        for block in &self.blocks {
            for conv in [&block.conv_s1, &block.conv_s2] {
                let mut z = conv.forward(&act)?;
                for v in z.data.iter_mut() {
                    *v = v.max(0.0);
                }
                act = z;
            }
        }
        Ok(act)
    }

    /// Full forward pass. `masks: None` disables dropout (inference);
    /// `Some` applies inverted dropout (training).
    pub fn forward(&self, x: &[f64], masks: Option<&DropoutMasks>) -> Result<ForwardPass, ShapeError> {
        self.check_input(x)?;
        let keep_scale = 1.0 / (1.0 - self.spec.dropout_p);
        let mut conv_inputs = Vec::with_capacity(2 * self.blocks.len());
        let mut conv_zs = Vec::with_capacity(2 * self.blocks.len());
        let mut act = Activations1d::from_single_channel(x);
        for block in &self.blocks {
            for conv in [&block.conv_s1, &block.conv_s2] {
                let z = conv.forward(&act)?;
                conv_inputs.push(act);
                let mut a = z.clone();
                for v in a.data.iter_mut() {
                    *v = v.max(0.0);
                }
                conv_zs.push(z);
                act = a;
            }
        }
        let last_block = act.clone();

        let mut flat = act.data;
        if let Some(m) = masks {
            for (v, &keep) in flat.iter_mut().zip(&m.last_conv) {
                *v = if keep { *v * keep_scale } else { 0.0 };
            }
        }

        let z1 = self.dense1.forward(&flat);
        let mut a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let dense1_act = a1.clone();
        if let Some(m) = masks {
            for (v, &keep) in a1.iter_mut().zip(&m.dense1) {
                *v = if keep { *v * keep_scale } else { 0.0 };
            }
        }

        let z2 = self.dense2.forward(&a1);
        let mut a2: Vec<f64> = z2.iter().map(|v| v.max(0.0)).collect();
        let dense2_act = a2.clone();
        if let Some(m) = masks {
            for (v, &keep) in a2.iter_mut().zip(&m.dense2) {
                *v = if keep { *v * keep_scale } else { 0.0 };
            }
        }

        let logits = self.output.forward(&a2);
        let probs = softmax2(&logits);

        Ok(ForwardPass {
            probs,
            logits: [logits[0], logits[1]],
            last_block,
            dense2_act,
            cache: Cache {
                conv_inputs,
                conv_zs,
                flat,
                z1,
                a1,
                dense1_act,
                z2,
                a2,
            },
        })
    }

    /// Inference probabilities `[wake, sleep]` (deterministic, no dropout).
    pub fn infer(&self, x: &[f64]) -> Result<[f64; 2], ShapeError> {
        Ok(self.forward(x, None)?.probs)
    }

    /// Predicted label: positive ("wake") wins ties.
    pub fn predict(&self, x: &[f64]) -> Result<BinaryLabel, ShapeError> {
        let probs = self.infer(x)?;
        Ok(if probs[0] >= probs[1] {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        })
    }

    /// Post-ReLU activations of the second dense layer in inference mode.
    pub fn dense2_activations(&self, x: &[f64]) -> Result<Vec<f64>, ShapeError> {
        Ok(self.forward(x, None)?.dense2_act)
    }

    /// Gradients of the cross-entropy loss for one example. Dropout masks in
    /// the pass are treated as constants.
    pub fn backward(&self, pass: &ForwardPass, label: BinaryLabel, masks: Option<&DropoutMasks>) -> Gradients {
        let keep_scale = 1.0 / (1.0 - self.spec.dropout_p);
        let mut grads = Gradients::zeros_like(self);
        let n_conv_segs = 4 * self.blocks.len();

        // Softmax + cross-entropy: dL/dlogits = probs - onehot.
        let mut dlogits = vec![pass.probs[0], pass.probs[1]];
        match label {
            BinaryLabel::Positive => dlogits[0] -= 1.0,
            BinaryLabel::Negative => dlogits[1] -= 1.0,
        }

        let (out_w, out_b) = grads.seg_pair_mut(n_conv_segs + 4);
        let mut da2 = self.output.backward(&pass.cache.a2, &dlogits, out_w, out_b);

        if let Some(m) = masks {
            for (v, &keep) in da2.iter_mut().zip(&m.dense2) {
                *v = if keep { *v * keep_scale } else { 0.0 };
            }
        }
        let dz2: Vec<f64> = da2
            .iter()
            .zip(&pass.cache.z2)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let (d2_w, d2_b) = grads.seg_pair_mut(n_conv_segs + 2);
        let mut da1 = self.dense2.backward(&pass.cache.a1, &dz2, d2_w, d2_b);

        if let Some(m) = masks {
            for (v, &keep) in da1.iter_mut().zip(&m.dense1) {
                *v = if keep { *v * keep_scale } else { 0.0 };
            }
        }
        let dz1: Vec<f64> = da1
            .iter()
            .zip(&pass.cache.z1)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let (d1_w, d1_b) = grads.seg_pair_mut(n_conv_segs);
        let mut dflat = self.dense1.backward(&pass.cache.flat, &dz1, d1_w, d1_b);

        if let Some(m) = masks {
            for (v, &keep) in dflat.iter_mut().zip(&m.last_conv) {
                *v = if keep { *v * keep_scale } else { 0.0 };
            }
        }

        let out_len = self.spec.block_output_len();
        let mut dact = Activations1d {
            channels: self.spec.filters,
            len: out_len,
            data: dflat,
        };

        for (bi, block) in self.blocks.iter().enumerate().rev() {
            for (ci, conv) in [&block.conv_s1, &block.conv_s2].into_iter().enumerate().rev() {
                let layer_idx = 2 * bi + ci;
                let z = &pass.cache.conv_zs[layer_idx];
                let x_in = &pass.cache.conv_inputs[layer_idx];
                let dz = Activations1d {
                    channels: dact.channels,
                    len: dact.len,
                    data: dact
                        .data
                        .iter()
                        .zip(&z.data)
                        .map(|(&g, &zv)| if zv > 0.0 { g } else { 0.0 })
                        .collect(),
                };
                let seg = 4 * bi + 2 * ci;
                let (cw, cb) = grads.seg_pair_mut(seg);
                dact = conv.backward(x_in, &dz, cw, cb);
            }
        }
        grads
    }
}

/// Result of a forward pass with everything backprop and the
/// interpretability analyses need.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Softmax probabilities `[wake, sleep]` (sum to 1).
    pub probs: [f64; 2],
    pub logits: [f64; 2],
    /// Last convolution block output (post-ReLU, pre-dropout).
    pub last_block: Activations1d,
    /// Second dense layer activations (post-ReLU, pre-dropout).
    pub dense2_act: Vec<f64>,
    pub cache: Cache,
}

/// Intermediate activations retained for backprop.
#[derive(Debug, Clone)]
pub struct Cache {
    conv_inputs: Vec<Activations1d>,
    conv_zs: Vec<Activations1d>,
    flat: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    #[allow(dead_code)]
    dense1_act: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
}

/// Parameter gradients, stored in the model's segment order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub segs: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Self {
        Gradients {
            segs: model
                .param_segments()
                .iter()
                .map(|s| vec![0.0; s.len()])
                .collect(),
        }
    }

    /// Mutable (weights, bias) pair starting at segment `i`.
    fn seg_pair_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let (a, b) = self.segs.split_at_mut(i + 1);
        (a[i].as_mut_slice(), b[0].as_mut_slice())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.segs.iter_mut().zip(&other.segs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.segs.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Numerically stable two-class softmax.
pub fn softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Cross-entropy of the true class with an epsilon floor.
pub fn cross_entropy(probs: &[f64; 2], label: BinaryLabel) -> f64 {
    let p = match label {
        BinaryLabel::Positive => probs[0],
        BinaryLabel::Negative => probs[1],
    };
    -p.max(CROSS_ENTROPY_EPS).ln()
}

#[cfg(test)]
mod tests;
