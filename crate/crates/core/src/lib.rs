//! Sleep/wake classification from instantaneous heart rate.
//!
//! This crate turns overnight ECG or PPG recordings into per-30-second
//! wake/sleep predictions:
//!
//! 1. [`ingest`] parses EDF and CSV signal files plus hypnogram annotations.
//! 2. [`beat`] detects R peaks (ECG) or pulse peaks (PPG) with a
//!    two-moving-average event detector and rejects implausible beats with a
//!    5-beat median filter.
//! 3. [`ihr`] converts beat times into a uniformly resampled 4 Hz
//!    instantaneous-heart-rate series via shape-preserving cubic
//!    interpolation, and [`window`] cuts it into labeled context windows.
//! 4. [`cohort`] assembles labeled training/validation cohorts for the
//!    wake-vs-sleep and REM-vs-non-REM tasks.
//! 5. [`nn`] is a self-contained 1-D convolutional network (forward,
//!    backprop, dropout, mini-batch gradient descent) in pure `f64`.
//! 6. [`scattering`] is a Morlet wavelet-scattering baseline with a
//!    sigmoid-MLP head trained by scaled conjugate gradient.
//! 7. [`metrics`] and [`interpret`] cover evaluation statistics and the
//!    learned-feature analyses (feature atlas, stage-indicative channel
//!    assignment, activation traces, PCA projections).
//!
//! Everything is deterministic given a seed: all randomness flows through
//! named sub-streams (see [`rng`]).

pub mod beat;
pub mod cohort;
pub(crate) mod dsp;
pub mod ihr;
pub mod ingest;
pub mod interpret;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scattering;
pub mod synth;
pub mod window;
