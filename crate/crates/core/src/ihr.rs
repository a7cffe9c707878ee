//! Instantaneous heart rate: knot extraction and 4 Hz resampling.
//!
//! The IHR is treated as a continuous positive function estimated at each
//! trusted beat as 60 over the preceding beat-to-beat interval, then
//! resampled onto a uniform 4 Hz grid with a shape-preserving (monotone)
//! piecewise cubic Hermite interpolant using the Fritsch-Carlson derivative
//! rule. The grid is anchored at the first knot; no extrapolation happens
//! beyond the first or last knot.

use crate::beat::BeatSeries;
use thiserror::Error;

/// Fixed resampling rate in Hz.
pub const IHR_RATE_HZ: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IhrSource {
    EcgIhr,
    PpgIhr,
}

impl From<crate::beat::BeatSource> for IhrSource {
    fn from(s: crate::beat::BeatSource) -> Self {
        match s {
            crate::beat::BeatSource::Ecg => IhrSource::EcgIhr,
            crate::beat::BeatSource::Ppg => IhrSource::PpgIhr,
        }
    }
}

/// Uniformly sampled IHR in bpm at [`IHR_RATE_HZ`].
#[derive(Debug, Clone)]
pub struct IhrSeries {
    pub values: Vec<f64>,
    /// Time of the first sample, seconds from recording start.
    pub t0: f64,
    pub source: IhrSource,
}

impl IhrSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.t0 + index as f64 / IHR_RATE_HZ
    }

    pub fn end_time(&self) -> f64 {
        self.time_at(self.values.len().saturating_sub(1))
    }
}

#[derive(Debug, Error)]
pub enum IhrError {
    #[error("need at least {required} beats, found {actual}")]
    TooFewBeats { required: usize, actual: usize },
    #[error("knot times are not strictly increasing at index {index}")]
    NonIncreasing { index: usize },
    #[error("need at least 2 knots, found {actual}")]
    TooFewKnots { actual: usize },
    #[error("knot at index {index} has non-positive value {value}")]
    NonPositive { index: usize, value: f64 },
}

/// IHR knots `(time, bpm)`: one per trusted beat `i >= 2`, valued
/// `60 / (r_i - r_{i-1})`. Beats whose incoming interval is flagged as an
/// artifact contribute no knot but still anchor the following interval.
pub fn ihr_knots(beats: &BeatSeries) -> Result<Vec<(f64, f64)>, IhrError> {
    let t = beats.times();
    if t.len() < 2 {
        return Err(IhrError::TooFewBeats {
            required: 2,
            actual: t.len(),
        });
    }
    let flags = beats.flags();
    let mut knots = Vec::with_capacity(t.len() - 1);
    for i in 1..t.len() {
        if flags[i] {
            continue;
        }
        let rri = t[i] - t[i - 1];
        if !(rri > 0.0) {
            return Err(IhrError::NonIncreasing { index: i });
        }
        knots.push((t[i], 60.0 / rri));
    }
    Ok(knots)
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self, IhrError> {
        if knots.len() < 2 {
            return Err(IhrError::TooFewKnots {
                actual: knots.len(),
            });
        }
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(IhrError::NonIncreasing { index: i + 1 });
            }
        }
        let x: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let y: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let d = fritsch_carlson_derivatives(&x, &y);
        Ok(Pchip { x, y, d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Evaluates the interpolant; `t` is clamped to the knot domain.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        // Index of the interval [x[k], x[k+1]) containing t.
        let k = match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            idx => idx - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let (d0, d1) = (self.d[k], self.d[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }
}

/// Knot derivatives that keep the interpolant monotone on monotone data:
/// zero at local extrema, weighted harmonic mean of adjacent secants inside
/// monotone runs, and clipped one-sided estimates at the ends.
fn fritsch_carlson_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 2 {
        let slope = (y[1] - y[0]) / (x[1] - x[0]);
        return vec![slope, slope];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = y
        .windows(2)
        .zip(&h)
        .map(|(w, &hi)| (w[1] - w[0]) / hi)
        .collect();

    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let (dl, dr) = (delta[i - 1], delta[i]);
        if dl == 0.0 || dr == 0.0 || (dl > 0.0) != (dr > 0.0) {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / dl + w2 / dr);
        }
    }
    d[0] = edge_derivative(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_derivative(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// One-sided three-point end derivative, clipped so the end interval stays
/// shape-preserving.
fn edge_derivative(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if sign(d) != sign(del0) {
        0.0
    } else if sign(del0) != sign(del1) && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Resamples knots onto the 4 Hz grid anchored at the first knot, with no
/// grid point beyond the last knot.
pub fn pchip_resample(knots: &[(f64, f64)], source: IhrSource) -> Result<IhrSeries, IhrError> {
    let interp = Pchip::new(knots)?;
    if let Some((i, &(_, v))) = knots.iter().enumerate().find(|(_, k)| !(k.1 > 0.0)) {
        return Err(IhrError::NonPositive { index: i, value: v });
    }
    let (start, end) = interp.domain();
    let count = ((end - start) * IHR_RATE_HZ).floor() as usize + 1;
    let values = (0..count)
        .map(|k| interp.eval(start + k as f64 / IHR_RATE_HZ))
        .collect();
    Ok(IhrSeries {
        values,
        t0: start,
        source,
    })
}
