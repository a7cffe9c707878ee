//! Order-2 Morlet wavelet scattering transform.
//!
//! One wavelet per octave over `log2(T)` octaves, a Gaussian low-pass at
//! averaging scale `T`, periodic (FFT-domain) filtering. Coefficients are
//! the locally averaged moduli: `S0 = x * phi`, `S1(j1) = |x * psi_j1| *
//! phi`, `S2(j1, j2) = ||x * psi_j1| * psi_j2| * phi` for the
//! frequency-decreasing paths `j2 > j1` only. Averaged outputs are
//! subsampled at `T/2` and the first/last `T` samples are discarded to
//! suppress wrap-around artifacts on non-periodic windows.
//!
//! The band-pass bank is globally rescaled so the Littlewood-Paley sum
//! stays at or below one, which makes the whole transform non-expansive.

mod head;
mod io;

pub use head::{train_scg, ScgOutcome, Standardizer, StHead, StTrainError};
pub use io::{
    read_features, read_head, write_features, write_head, FeatureFileError, FeatureRecord,
    FEATURES_MAGIC, HEAD_MAGIC,
};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScatteringConfig {
    /// Scattering order; fixed at 2.
    pub order: usize,
    /// Wavelets per octave; fixed at 1.
    pub q: usize,
    /// Averaging scale `T` in samples (a power of two).
    pub averaging_scale: usize,
    pub input_length: usize,
}

impl ScatteringConfig {
    /// The baseline configuration: m = 2, Q = 1, T = 2^7.
    pub fn for_input(input_length: usize) -> Self {
        ScatteringConfig {
            order: 2,
            q: 1,
            averaging_scale: 128,
            input_length,
        }
    }

    /// Octave count `J = log2(T)`.
    pub fn octaves(&self) -> usize {
        self.averaging_scale.trailing_zeros() as usize
    }

    /// Path count: order 0, `J` first-order, `C(J, 2)` frequency-decreasing
    /// second-order paths.
    pub fn path_count(&self) -> usize {
        let j = self.octaves();
        1 + j + j * (j - 1) / 2
    }
}

#[derive(Debug, Error)]
pub enum ScatterError {
    #[error("averaging scale {0} is not a power of two")]
    ScaleNotPowerOfTwo(usize),
    #[error("input length {input} must be at least twice the averaging scale {scale}")]
    InputTooShort { input: usize, scale: usize },
    #[error("input has {actual} samples, bank expects {expected}")]
    InputMismatch { expected: usize, actual: usize },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

/// One scattering path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "order")]
pub enum ScatterPath {
    #[serde(rename = "0")]
    Order0,
    #[serde(rename = "1")]
    Order1 { j1: usize },
    #[serde(rename = "2")]
    Order2 { j1: usize, j2: usize },
}

/// Frequency-domain filter bank on a fixed grid.
pub struct FilterBank {
    pub config: ScatteringConfig,
    /// Band-pass responses, one per octave (j = 1 is the highest band).
    psi_hat: Vec<Vec<f64>>,
    phi_hat: Vec<f64>,
    /// Time indices kept after subsampling and boundary trimming.
    kept: Vec<usize>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

/// Builds Morlet band-pass filters (zero-mean by construction) and the
/// Gaussian low-pass, then rescales the band-passes so the symmetrized
/// Littlewood-Paley sum never exceeds one.
pub fn build_filterbank(config: ScatteringConfig) -> Result<FilterBank, ScatterError> {
    let t_scale = config.averaging_scale;
    let n = config.input_length;
    if !t_scale.is_power_of_two() {
        return Err(ScatterError::ScaleNotPowerOfTwo(t_scale));
    }
    if n < 2 * t_scale {
        return Err(ScatterError::InputTooShort {
            input: n,
            scale: t_scale,
        });
    }
    if config.order != 2 || config.q != 1 {
        return Err(ScatterError::Unsupported(format!(
            "order {} / Q {} (this bank implements order 2, Q 1)",
            config.order, config.q
        )));
    }

    // Angular frequency of DFT bin k, wrapped to [-pi, pi).
    let omega = |k: usize| -> f64 {
        let k = k as f64;
        let n = n as f64;
        let wrapped = if k <= n / 2.0 { k } else { k - n };
        2.0 * std::f64::consts::PI * wrapped / n
    };

    let j_count = config.octaves();
    let mut psi_hat = Vec::with_capacity(j_count);
    for j in 1..=j_count {
        // Center frequency halves per octave; relative bandwidth is fixed.
        let xi = 0.75 * std::f64::consts::PI / (1 << (j - 1)) as f64;
        let sigma = xi / 3.0;
        let kappa = (-xi * xi / (2.0 * sigma * sigma)).exp();
        let row: Vec<f64> = (0..n)
            .map(|k| {
                let w = omega(k);
                let main = (-(w - xi) * (w - xi) / (2.0 * sigma * sigma)).exp();
                let correction = kappa * (-w * w / (2.0 * sigma * sigma)).exp();
                main - correction
            })
            .collect();
        psi_hat.push(row);
    }

    // Gaussian low-pass with time-domain standard deviation T/2.
    let sigma_t = t_scale as f64 / 2.0;
    let phi_hat: Vec<f64> = (0..n)
        .map(|k| {
            let w = omega(k);
            (-(w * sigma_t) * (w * sigma_t) / 2.0).exp()
        })
        .collect();

    // Rescale so max_w |phi|^2 + sum_j (|psi_j(w)|^2 + |psi_j(-w)|^2)/2 <= 1.
    let mut alpha_sq = f64::INFINITY;
    for k in 0..n {
        let k_neg = if k == 0 { 0 } else { n - k };
        let band: f64 = psi_hat
            .iter()
            .map(|row| (row[k] * row[k] + row[k_neg] * row[k_neg]) / 2.0)
            .sum();
        if band > 1e-12 {
            let headroom = 1.0 - phi_hat[k] * phi_hat[k];
            alpha_sq = alpha_sq.min(headroom / band);
        }
    }
    let alpha = alpha_sq.max(0.0).sqrt().min(1.0e6);
    for row in psi_hat.iter_mut() {
        for v in row.iter_mut() {
            *v *= alpha;
        }
    }

    let subsample = t_scale / 2;
    let kept: Vec<usize> = (0..n)
        .step_by(subsample)
        .filter(|&idx| idx >= t_scale && idx < n - t_scale)
        .collect();

    let mut planner = FftPlanner::new();
    Ok(FilterBank {
        config,
        psi_hat,
        phi_hat,
        kept,
        fft: planner.plan_fft_forward(n),
        ifft: planner.plan_fft_inverse(n),
    })
}

impl FilterBank {
    pub fn octaves(&self) -> usize {
        self.psi_hat.len()
    }

    /// Kept time positions per path after subsampling and trimming.
    pub fn kept_positions(&self) -> &[usize] {
        &self.kept
    }

    /// Total feature-vector length: `path_count * kept_positions`.
    pub fn feature_len(&self) -> usize {
        self.config.path_count() * self.kept.len()
    }

    /// Paths in emission order.
    pub fn paths(&self) -> Vec<ScatterPath> {
        let j_count = self.octaves();
        let mut paths = vec![ScatterPath::Order0];
        for j1 in 1..=j_count {
            paths.push(ScatterPath::Order1 { j1 });
        }
        for j1 in 1..=j_count {
            for j2 in j1 + 1..=j_count {
                paths.push(ScatterPath::Order2 { j1, j2 });
            }
        }
        paths
    }

    /// Symmetrized Littlewood-Paley sum at each frequency bin.
    pub fn littlewood_paley(&self) -> Vec<f64> {
        let n = self.config.input_length;
        (0..n)
            .map(|k| {
                let k_neg = if k == 0 { 0 } else { n - k };
                let band: f64 = self
                    .psi_hat
                    .iter()
                    .map(|row| (row[k] * row[k] + row[k_neg] * row[k_neg]) / 2.0)
                    .sum();
                self.phi_hat[k] * self.phi_hat[k] + band
            })
            .collect()
    }

    /// Band-pass response at frequency bin zero (zero-mean check).
    pub fn psi_dc_response(&self, j: usize) -> f64 {
        self.psi_hat[j - 1][0]
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        buf
    }

    /// Inverse transform of `spec .* filter`, normalized.
    fn filter_ifft(&self, spec: &[Complex64], filter: &[f64]) -> Vec<Complex64> {
        let n = spec.len() as f64;
        let mut buf: Vec<Complex64> = spec
            .iter()
            .zip(filter)
            .map(|(s, &f)| s * f)
            .collect();
        self.ifft.process(&mut buf);
        for v in buf.iter_mut() {
            *v /= n;
        }
        buf
    }

    fn lowpass_keep(&self, spec: &[Complex64]) -> Vec<f64> {
        let full = self.filter_ifft(spec, &self.phi_hat);
        self.kept.iter().map(|&i| full[i].re).collect()
    }
}

/// Scattering coefficients for one window, concatenated in path order with
/// the path index alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringFeatures {
    pub coefficients: Vec<f64>,
    pub paths: Vec<ScatterPath>,
    /// Kept coefficients per path.
    pub per_path: usize,
}

pub fn scatter(x: &[f64], bank: &FilterBank) -> Result<ScatteringFeatures, ScatterError> {
    let n = bank.config.input_length;
    if x.len() != n {
        return Err(ScatterError::InputMismatch {
            expected: n,
            actual: x.len(),
        });
    }
    let j_count = bank.octaves();
    let spec0 = bank.spectrum(x);
    let mut coefficients = Vec::with_capacity(bank.feature_len());

    // Order 0.
    coefficients.extend(bank.lowpass_keep(&spec0));

    // Order 1 moduli and their spectra (reused by order 2).
    let mut u1_specs = Vec::with_capacity(j_count);
    for j in 0..j_count {
        let u1: Vec<f64> = bank
            .filter_ifft(&spec0, &bank.psi_hat[j])
            .iter()
            .map(|c| c.norm())
            .collect();
        let u1_spec = bank.spectrum(&u1);
        coefficients.extend(bank.lowpass_keep(&u1_spec));
        u1_specs.push(u1_spec);
    }

    // Order 2, frequency-decreasing paths only.
    for j1 in 0..j_count {
        for j2 in j1 + 1..j_count {
            let u2: Vec<f64> = bank
                .filter_ifft(&u1_specs[j1], &bank.psi_hat[j2])
                .iter()
                .map(|c| c.norm())
                .collect();
            let u2_spec = bank.spectrum(&u2);
            coefficients.extend(bank.lowpass_keep(&u2_spec));
        }
    }

    debug_assert_eq!(coefficients.len(), bank.feature_len());
    Ok(ScatteringFeatures {
        coefficients,
        paths: bank.paths(),
        per_path: bank.kept_positions().len(),
    })
}

/// First-order modulus energies `||x * psi_j||^2` before averaging, for the
/// energy-ordering diagnostics.
pub fn first_order_energies(x: &[f64], bank: &FilterBank) -> Result<Vec<f64>, ScatterError> {
    let n = bank.config.input_length;
    if x.len() != n {
        return Err(ScatterError::InputMismatch {
            expected: n,
            actual: x.len(),
        });
    }
    let spec0 = bank.spectrum(x);
    Ok((0..bank.octaves())
        .map(|j| {
            bank.filter_ifft(&spec0, &bank.psi_hat[j])
                .iter()
                .map(|c| c.norm_sqr())
                .sum()
        })
        .collect())
}
