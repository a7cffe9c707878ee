//! Interpretability analyses over a trained model: the learned feature
//! atlas, stage-indicative channel assignment via rank-sum matrices,
//! wake/sleep activation traces, and the dense-layer PCA export.
//!
//! The channel sets indicative of wake or sleep are derived per trained
//! model from the test matrices rather than hardcoded: retraining can land
//! in a different local minimum with permuted or entirely different
//! features.

use crate::cohort::BinaryLabel;
use crate::metrics::{self, MetricsError};
use crate::nn::{CnnModel, ShapeError};
use rayon::prelude::*;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("need at least {needed} windows, found {actual}")]
    NotEnoughWindows { needed: usize, actual: usize },
    #[error("index out of range: {what} {value} (limit {limit})")]
    BadIndex {
        what: &'static str,
        value: usize,
        limit: usize,
    },
    #[error("both classes must be present")]
    SingleClass,
    #[error("channel set is empty")]
    EmptySet,
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Last-block activations for a window collection: `n` windows by `t_out`
/// samples by `channels` filters, all non-negative (post-ReLU).
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub n: usize,
    pub t_out: usize,
    pub channels: usize,
    data: Vec<f64>,
}

impl Activations {
    pub fn from_raw(n: usize, t_out: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * t_out * channels);
        Activations {
            n,
            t_out,
            channels,
            data,
        }
    }

    /// `y_i^j(t)`: activation of channel `j` at output sample `t` for
    /// window `i`.
    #[inline]
    pub fn at(&self, i: usize, t: usize, j: usize) -> f64 {
        self.data[(i * self.channels + j) * self.t_out + t]
    }

    /// All windows' activations of channel `j` at sample `t`.
    pub fn column(&self, t: usize, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i, t, j)).collect()
    }
}

/// Runs the convolutional section over every window (inference mode).
pub fn last_block_activations(
    model: &CnnModel,
    inputs: &[Vec<f64>],
) -> Result<Activations, InterpretError> {
    let per_window: Vec<_> = inputs
        .par_iter()
        .map(|x| model.conv_section(x))
        .collect::<Result<_, _>>()?;
    let t_out = model.spec.block_output_len();
    let channels = model.spec.filters;
    let mut data = Vec::with_capacity(inputs.len() * t_out * channels);
    for act in &per_window {
        debug_assert_eq!(act.len, t_out);
        debug_assert_eq!(act.channels, channels);
        data.extend_from_slice(&act.data);
    }
    Ok(Activations {
        n: inputs.len(),
        t_out,
        channels,
        data,
    })
}

/// The feature morphology `psi_j(t)`: the elementwise median of the `k`
/// windows with the largest activation of channel `j` at sample `t`.
/// Ties in the sequential argmax break toward the lower window index.
pub fn extract_atlas(
    activations: &Activations,
    windows: &[Vec<f64>],
    t: usize,
    j: usize,
    k: usize,
) -> Result<Vec<f64>, InterpretError> {
    if windows.len() != activations.n {
        return Err(InterpretError::BadIndex {
            what: "window count",
            value: windows.len(),
            limit: activations.n,
        });
    }
    if t >= activations.t_out {
        return Err(InterpretError::BadIndex {
            what: "sample t",
            value: t,
            limit: activations.t_out,
        });
    }
    if j >= activations.channels {
        return Err(InterpretError::BadIndex {
            what: "channel j",
            value: j,
            limit: activations.channels,
        });
    }
    if activations.n < k || k == 0 {
        return Err(InterpretError::NotEnoughWindows {
            needed: k.max(1),
            actual: activations.n,
        });
    }

    let mut order: Vec<usize> = (0..activations.n).collect();
    order.sort_by(|&a, &b| {
        activations
            .at(b, t, j)
            .partial_cmp(&activations.at(a, t, j))
            .unwrap()
            .then(a.cmp(&b))
    });
    let top = &order[..k];

    let dim = windows[0].len();
    let mut psi = Vec::with_capacity(dim);
    let mut column = Vec::with_capacity(k);
    for coord in 0..dim {
        column.clear();
        column.extend(top.iter().map(|&i| windows[i][coord]));
        psi.push(crate::window::median(&column));
    }
    Ok(psi)
}

/// `-log p` matrices of the per-(channel, sample) one-sided rank-sum tests:
/// `wake_logp[j][t]` tests whether wake-class activations exceed
/// sleep-class ones, `sleep_logp` the reverse.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTestMatrices {
    pub wake_logp: Vec<Vec<f64>>,
    pub sleep_logp: Vec<Vec<f64>>,
}

pub fn feature_stage_tests(
    activations: &Activations,
    labels: &[BinaryLabel],
) -> Result<StageTestMatrices, InterpretError> {
    if labels.len() != activations.n {
        return Err(InterpretError::BadIndex {
            what: "label count",
            value: labels.len(),
            limit: activations.n,
        });
    }
    let wake_idx: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == BinaryLabel::Positive)
        .collect();
    let sleep_idx: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == BinaryLabel::Negative)
        .collect();
    if wake_idx.is_empty() || sleep_idx.is_empty() {
        return Err(InterpretError::SingleClass);
    }

    let cells: Vec<(f64, f64)> = (0..activations.channels * activations.t_out)
        .into_par_iter()
        .map(|cell| {
            let j = cell / activations.t_out;
            let t = cell % activations.t_out;
            let wake: Vec<f64> = wake_idx.iter().map(|&i| activations.at(i, t, j)).collect();
            let sleep: Vec<f64> = sleep_idx.iter().map(|&i| activations.at(i, t, j)).collect();
            let wake_p = metrics::rank_sum_test(&wake, &sleep)
                .expect("non-empty samples")
                .neg_log_p;
            let sleep_p = metrics::rank_sum_test(&sleep, &wake)
                .expect("non-empty samples")
                .neg_log_p;
            (wake_p, sleep_p)
        })
        .collect();

    let mut wake_logp = vec![vec![0.0; activations.t_out]; activations.channels];
    let mut sleep_logp = vec![vec![0.0; activations.t_out]; activations.channels];
    for (cell, (w, s)) in cells.into_iter().enumerate() {
        let j = cell / activations.t_out;
        let t = cell % activations.t_out;
        wake_logp[j][t] = w;
        sleep_logp[j][t] = s;
    }
    Ok(StageTestMatrices {
        wake_logp,
        sleep_logp,
    })
}

/// Default `-log p` threshold for calling a channel stage-indicative.
pub const STAGE_SET_THRESHOLD: f64 = 3.0;

/// Assigns channels to wake/sleep-indicative sets from the test matrices.
///
/// A channel joins a set when its `-log p` row maximum over the late samples
/// (the final quarter, where detections are most predictive of the label)
/// clears the threshold and strictly dominates the opposite matrix's
/// maximum. The sets are disjoint by construction; channels may stay
/// unassigned.
pub fn assign_stage_sets(
    matrices: &StageTestMatrices,
    threshold: f64,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let channels = matrices.wake_logp.len();
    let mut wake_set = BTreeSet::new();
    let mut sleep_set = BTreeSet::new();
    for j in 0..channels {
        let t_out = matrices.wake_logp[j].len();
        let late = t_out - (t_out / 4).max(1);
        let row_max = |row: &[f64]| row[late..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let wake_max = row_max(&matrices.wake_logp[j]);
        let sleep_max = row_max(&matrices.sleep_logp[j]);
        if wake_max >= threshold && wake_max > sleep_max {
            wake_set.insert(j);
        } else if sleep_max >= threshold && sleep_max > wake_max {
            sleep_set.insert(j);
        }
    }
    (wake_set, sleep_set)
}

/// Pointwise-maximum activation traces over the stage-indicative channel
/// subsets for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTraces {
    pub sigma_wake: Vec<f64>,
    pub sigma_sleep: Vec<f64>,
}

pub fn sigma_traces(
    activations: &Activations,
    window: usize,
    wake_set: &BTreeSet<usize>,
    sleep_set: &BTreeSet<usize>,
) -> Result<ActivationTraces, InterpretError> {
    if window >= activations.n {
        return Err(InterpretError::BadIndex {
            what: "window",
            value: window,
            limit: activations.n,
        });
    }
    if wake_set.is_empty() || sleep_set.is_empty() {
        return Err(InterpretError::EmptySet);
    }
    let max_over = |set: &BTreeSet<usize>| -> Vec<f64> {
        (0..activations.t_out)
            .map(|t| {
                set.iter()
                    .map(|&j| activations.at(window, t, j))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    Ok(ActivationTraces {
        sigma_wake: max_over(wake_set),
        sigma_sleep: max_over(sleep_set),
    })
}

/// Second-dense-layer activations projected onto the first three principal
/// components, with labels, for scatter-plot export.
#[derive(Debug, Clone)]
pub struct DensePca {
    pub coords: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub labels: Vec<BinaryLabel>,
}

pub fn dense_pca_export(
    model: &CnnModel,
    inputs: &[Vec<f64>],
    labels: &[BinaryLabel],
) -> Result<DensePca, InterpretError> {
    if inputs.len() < 4 {
        return Err(InterpretError::NotEnoughWindows {
            needed: 4,
            actual: inputs.len(),
        });
    }
    let acts: Vec<Vec<f64>> = inputs
        .par_iter()
        .map(|x| model.dense2_activations(x))
        .collect::<Result<_, _>>()?;
    let proj = metrics::pca_project(&acts, 3)?;
    Ok(DensePca {
        coords: proj.coords,
        explained_variance: proj.explained_variance,
        labels: labels.to_vec(),
    })
}
