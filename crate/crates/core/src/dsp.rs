//! Internal signal-processing primitives: Butterworth band-pass design,
//! zero-phase (forward-backward) filtering, and centered moving averages.

use rustfft::num_complex::Complex64;

/// Digital transfer-function coefficients, `b` over `a`, with `a[0] == 1`.
#[derive(Debug, Clone)]
pub(crate) struct TransferFn {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

/// Butterworth band-pass of the given analog prototype order (an order-2
/// prototype yields a 4th-degree digital filter). Corners in Hz.
pub(crate) fn butter_bandpass(
    order: usize,
    low_hz: f64,
    high_hz: f64,
    fs: f64,
) -> Result<TransferFn, String> {
    if !(low_hz > 0.0 && high_hz > low_hz) {
        return Err(format!("invalid band [{low_hz}, {high_hz}] Hz"));
    }
    if high_hz >= fs / 2.0 {
        return Err(format!(
            "band edge {high_hz} Hz not below Nyquist {} Hz",
            fs / 2.0
        ));
    }

    // Analog Butterworth prototype poles on the unit left half-circle.
    let n = order;
    let proto_poles: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect();

    // Pre-warped corner frequencies for the bilinear transform.
    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / fs).tan();
    let w1 = warp(low_hz);
    let w2 = warp(high_hz);
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;

    // Low-pass prototype -> band-pass (doubles the pole count, adds n zeros
    // at the origin).
    let mut poles = Vec::with_capacity(2 * n);
    for p in &proto_poles {
        let scaled = p * (bw / 2.0);
        let disc = (scaled * scaled - Complex64::new(w0 * w0, 0.0)).sqrt();
        poles.push(scaled + disc);
        poles.push(scaled - disc);
    }
    let zeros = vec![Complex64::new(0.0, 0.0); n];
    let gain = bw.powi(n as i32);

    // Bilinear transform to the z-domain.
    let mut zd: Vec<Complex64> = zeros
        .iter()
        .map(|z| (Complex64::new(fs2, 0.0) + z) / (Complex64::new(fs2, 0.0) - z))
        .collect();
    let pd: Vec<Complex64> = poles
        .iter()
        .map(|p| (Complex64::new(fs2, 0.0) + p) / (Complex64::new(fs2, 0.0) - p))
        .collect();
    let num: Complex64 = zeros
        .iter()
        .map(|z| Complex64::new(fs2, 0.0) - z)
        .product();
    let den: Complex64 = poles
        .iter()
        .map(|p| Complex64::new(fs2, 0.0) - p)
        .product();
    let gd = gain * (num / den).re;
    // Degree deficit maps zeros at analog infinity to z = -1.
    while zd.len() < pd.len() {
        zd.push(Complex64::new(-1.0, 0.0));
    }

    let b: Vec<f64> = poly(&zd).iter().map(|c| (c * gd).re).collect();
    let a: Vec<f64> = poly(&pd).iter().map(|c| c.re).collect();
    Ok(TransferFn { b, a })
}

/// Monic polynomial coefficients (descending powers) from roots.
fn poly(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

/// Direct-form II transposed IIR filter, zero initial state.
pub(crate) fn lfilter(tf: &TransferFn, x: &[f64]) -> Vec<f64> {
    let nb = tf.b.len();
    let na = tf.a.len();
    let order = nb.max(na) - 1;
    let mut state = vec![0.0_f64; order];
    let mut y = Vec::with_capacity(x.len());
    for &xi in x {
        let yi = tf.b[0] * xi + state.first().copied().unwrap_or(0.0);
        for s in 0..order {
            let bterm = if s + 1 < nb { tf.b[s + 1] * xi } else { 0.0 };
            let aterm = if s + 1 < na { tf.a[s + 1] * yi } else { 0.0 };
            let carry = if s + 1 < order { state[s + 1] } else { 0.0 };
            state[s] = bterm - aterm + carry;
        }
        y.push(yi);
    }
    y
}

/// Zero-phase filtering: forward pass, reverse, second pass, reverse.
///
/// The input is extended at both ends by odd reflection long enough for the
/// zero-state transient to die out inside the padding; the extension is
/// trimmed from the result.
pub(crate) fn filtfilt(tf: &TransferFn, x: &[f64], pad: usize) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let pad = pad.min(x.len().saturating_sub(1));
    let mut ext = Vec::with_capacity(x.len() + 2 * pad);
    let first = x[0];
    for i in (1..=pad).rev() {
        ext.push(2.0 * first - x[i]);
    }
    ext.extend_from_slice(x);
    let last = x[x.len() - 1];
    for i in 1..=pad {
        ext.push(2.0 * last - x[x.len() - 1 - i]);
    }

    let mut y = lfilter(tf, &ext);
    y.reverse();
    let mut y = lfilter(tf, &y);
    y.reverse();
    y[pad..pad + x.len()].to_vec()
}

/// Centered moving average; the window shrinks symmetrically at the edges.
/// `win` is forced odd.
pub(crate) fn moving_average(x: &[f64], win: usize) -> Vec<f64> {
    let win = win.max(1) | 1;
    let half = win / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0_f64);
    for &v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Runs of consecutive indices where `mask` is true, as `[start, end)` pairs.
pub(crate) fn true_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len()));
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference coefficients computed with scipy.signal.butter(2, [lo, hi],
    // btype="bandpass", fs=fs).
    #[test]
    fn butterworth_matches_reference_design() {
        let tf = butter_bandpass(2, 8.0, 20.0, 200.0).unwrap();
        let b_ref = [
            0.027859766117136024,
            0.0,
            -0.05571953223427205,
            0.0,
            0.027859766117136024,
        ];
        let a_ref = [
            1.0,
            -3.2014145794383397,
            4.073940515892228,
            -2.4404021491641283,
            0.5869195080611902,
        ];
        for (got, want) in tf.b.iter().zip(b_ref) {
            assert_relative_eq!(got, &want, epsilon = 1e-12);
        }
        for (got, want) in tf.a.iter().zip(a_ref) {
            assert_relative_eq!(got, &want, epsilon = 1e-12);
        }

        let tf = butter_bandpass(2, 0.5, 8.0, 200.0).unwrap();
        assert_relative_eq!(tf.b[0], 0.01185768264324116, epsilon = 1e-12);
        assert_relative_eq!(tf.a[1], -3.661929127367906, epsilon = 1e-12);
        assert_relative_eq!(tf.a[4], 0.7166338735041576, epsilon = 1e-12);

        let tf = butter_bandpass(2, 8.0, 20.0, 128.0).unwrap();
        assert_relative_eq!(tf.b[0], 0.06049850763094056, epsilon = 1e-12);
        assert_relative_eq!(tf.a[2], 2.909952402673748, epsilon = 1e-12);
    }

    #[test]
    fn bandpass_rejects_dc_and_passes_midband() {
        let fs = 200.0;
        let tf = butter_bandpass(2, 8.0, 20.0, fs).unwrap();
        let n = 4000;
        let dc: Vec<f64> = vec![1.0; n];
        let y = filtfilt(&tf, &dc, 600);
        let mid = &y[n / 4..3 * n / 4];
        assert!(mid.iter().all(|v| v.abs() < 1e-6), "DC not rejected");

        let f = 13.0;
        let tone: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
            .collect();
        let y = filtfilt(&tf, &tone, 600);
        let amp = y[n / 4..3 * n / 4]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(amp > 0.9, "mid-band tone attenuated to {amp}");
    }

    #[test]
    fn filtfilt_has_zero_phase() {
        // A narrow pulse must stay centered after forward-backward filtering.
        let fs = 200.0;
        let tf = butter_bandpass(2, 8.0, 20.0, fs).unwrap();
        let n = 2001;
        let mut x = vec![0.0; n];
        x[1000] = 1.0;
        let y = filtfilt(&tf, &x, 600);
        let peak = y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 1000);
    }

    #[test]
    fn moving_average_basics() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = moving_average(&x, 3);
        assert_relative_eq!(y[2], 3.0);
        assert_relative_eq!(y[0], 1.5); // shrunken edge window {1,2}
        assert_relative_eq!(y[4], 4.5);
    }

    #[test]
    fn run_extraction() {
        let mask = [false, true, true, false, true];
        assert_eq!(true_runs(&mask), vec![(1, 3), (4, 5)]);
        assert_eq!(true_runs(&[true, true]), vec![(0, 2)]);
        assert!(true_runs(&[false]).is_empty());
    }
}
