//! Beat detection and artifact cleaning.
//!
//! Both ECG R peaks and PPG pulse peaks are found with the same
//! two-moving-average event detector: band-pass filter the signal, square
//! it, then mark blocks where a short (event-scale) moving average exceeds a
//! long (beat-scale) moving average plus an offset proportional to the mean
//! squared signal. Each block at least as wide as the short window yields
//! one beat at the block's maximum. The band corners, window lengths, and
//! offset factor are the published parameterizations of the method for each
//! modality and are all exposed in [`DetectorParams`].
//!
//! Cleaning walks the detected beats once, left to right, comparing each
//! beat-to-beat interval (RRI) against a 5-value median of its surrounding
//! intervals and against absolute bounds. Too-close beats are false
//! positives and are dropped; a too-long interval means a missed beat, so
//! the terminating beat is kept as a time anchor but flagged so that no
//! heart-rate estimate is derived from the untrusted interval.

use crate::dsp;
use crate::ingest::Channel;
use thiserror::Error;

/// Signal the beats were detected from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeatSource {
    Ecg,
    Ppg,
}

/// Strictly increasing beat times in seconds from recording start.
///
/// `flags[i]` marks the interval *ending* at beat `i` as untrusted (the
/// beat's time is still a valid anchor for the following interval).
#[derive(Debug, Clone)]
pub struct BeatSeries {
    times: Vec<f64>,
    flags: Vec<bool>,
    pub source: BeatSource,
    /// Set when the input signal had no variance and detection was skipped.
    pub flat_signal: bool,
}

#[derive(Debug, Error)]
pub enum BeatSeriesError {
    #[error("beat times are not strictly increasing at index {index}")]
    NotIncreasing { index: usize },
    #[error("beat time {time} at index {index} is negative")]
    Negative { index: usize, time: f64 },
    #[error("flag count {flags} does not match beat count {times}")]
    FlagMismatch { times: usize, flags: usize },
}

impl BeatSeries {
    pub fn new(
        times: Vec<f64>,
        flags: Vec<bool>,
        source: BeatSource,
    ) -> Result<Self, BeatSeriesError> {
        if flags.len() != times.len() {
            return Err(BeatSeriesError::FlagMismatch {
                times: times.len(),
                flags: flags.len(),
            });
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(BeatSeriesError::NotIncreasing { index: i + 1 });
            }
        }
        if let Some((i, &t)) = times.iter().enumerate().find(|(_, &t)| t < 0.0) {
            return Err(BeatSeriesError::Negative { index: i, time: t });
        }
        Ok(BeatSeries {
            times,
            flags,
            source,
            flat_signal: false,
        })
    }

    pub fn unflagged(times: Vec<f64>, source: BeatSource) -> Result<Self, BeatSeriesError> {
        let flags = vec![false; times.len()];
        Self::new(times, flags, source)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of beats with times in `[start, end)`.
    pub fn count_in(&self, start: f64, end: f64) -> usize {
        let lo = self.times.partition_point(|&t| t < start);
        let hi = self.times.partition_point(|&t| t < end);
        hi - lo
    }
}

/// Two-moving-average detector parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorParams {
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Event-scale moving-average window (QRS or systolic-peak width).
    pub short_window_ms: f64,
    /// Beat-scale moving-average window.
    pub long_window_ms: f64,
    /// Threshold offset factor on the mean squared signal.
    pub beta: f64,
}

impl DetectorParams {
    /// Published QRS parameterization: 8-20 Hz band, 97/611 ms windows,
    /// beta 0.08.
    pub fn ecg() -> Self {
        DetectorParams {
            band_low_hz: 8.0,
            band_high_hz: 20.0,
            short_window_ms: 97.0,
            long_window_ms: 611.0,
            beta: 0.08,
        }
    }

    /// Published systolic-peak parameterization: 0.5-8 Hz band, 111/667 ms
    /// windows, beta 0.02.
    pub fn ppg() -> Self {
        DetectorParams {
            band_low_hz: 0.5,
            band_high_hz: 8.0,
            short_window_ms: 111.0,
            long_window_ms: 667.0,
            beta: 0.02,
        }
    }
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("signal of {actual:.3} s is shorter than the long window ({required:.3} s)")]
    TooShort { required: f64, actual: f64 },
    #[error("sampling rate {fs} Hz cannot realize the {low}-{high} Hz band")]
    BadBand { fs: f64, low: f64, high: f64 },
}

/// Detects ECG R peaks. Returns beat times in seconds.
pub fn detect_r_peaks(channel: &Channel, params: &DetectorParams) -> Result<BeatSeries, DetectError> {
    detect_events(channel, params, BeatSource::Ecg)
}

/// Detects PPG pulse peaks (surrogate heart beats).
pub fn detect_ppg_peaks(
    channel: &Channel,
    params: &DetectorParams,
) -> Result<BeatSeries, DetectError> {
    detect_events(channel, params, BeatSource::Ppg)
}

fn detect_events(
    channel: &Channel,
    params: &DetectorParams,
    source: BeatSource,
) -> Result<BeatSeries, DetectError> {
    let fs = channel.sampling_rate;
    let x = &channel.samples;
    let short_win = ((params.short_window_ms / 1000.0 * fs).round() as usize).max(1);
    let long_win = ((params.long_window_ms / 1000.0 * fs).round() as usize).max(short_win + 1);
    if x.len() <= long_win {
        return Err(DetectError::TooShort {
            required: long_win as f64 / fs,
            actual: x.len() as f64 / fs,
        });
    }

    let mean = x.iter().sum::<f64>() / x.len() as f64;
    if x.iter().all(|&v| v == mean) {
        let mut empty = BeatSeries::unflagged(Vec::new(), source).unwrap();
        empty.flat_signal = true;
        return Ok(empty);
    }

    let tf = dsp::butter_bandpass(2, params.band_low_hz, params.band_high_hz, fs)
        .map_err(|_| DetectError::BadBand {
            fs,
            low: params.band_low_hz,
            high: params.band_high_hz,
        })?;
    // Forward-backward filtering keeps beat times free of phase delay; the
    // pad covers several periods of the low corner so the zero-state
    // transient dies inside it.
    let pad = ((6.0 * fs / params.band_low_hz).ceil() as usize).min(x.len() - 1);
    let filtered = dsp::filtfilt(&tf, x, pad);
    let squared: Vec<f64> = filtered.iter().map(|v| v * v).collect();

    let ma_event = dsp::moving_average(&squared, short_win);
    let ma_beat = dsp::moving_average(&squared, long_win);
    let offset = params.beta * squared.iter().sum::<f64>() / squared.len() as f64;
    let interest: Vec<bool> = ma_event
        .iter()
        .zip(&ma_beat)
        .map(|(&e, &b)| e > b + offset)
        .collect();

    let mut times = Vec::new();
    for (start, end) in dsp::true_runs(&interest) {
        if end - start < short_win {
            continue;
        }
        let peak = (start..end)
            .max_by(|&i, &j| squared[i].partial_cmp(&squared[j]).unwrap())
            .unwrap();
        times.push(peak as f64 / fs);
    }
    Ok(BeatSeries::unflagged(times, source).unwrap())
}

/// Artifact-rejection rule: ratio bounds against a 5-value local RRI median
/// plus absolute RRI bounds.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArtifactRule {
    pub low_ratio: f64,
    pub high_ratio: f64,
    pub min_rri_s: f64,
    pub max_rri_s: f64,
}

impl Default for ArtifactRule {
    /// Loose defaults: [0.7, 1.3] of the local median, absolute bounds
    /// 0.3-2.0 s (25-200 bpm).
    fn default() -> Self {
        ArtifactRule {
            low_ratio: 0.7,
            high_ratio: 1.3,
            min_rri_s: 0.3,
            max_rri_s: 2.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot form a 5-beat median window from {n} beats")]
    TooFewBeats { n: usize },
}

/// Outcome of [`clean_beats`], with rejection counts for the run ledger.
#[derive(Debug, Clone)]
pub struct CleanOutcome {
    pub series: BeatSeries,
    /// Beats dropped because their RRI was too short (false detections).
    pub rejected_too_close: usize,
    /// Beats kept but flagged because the RRI ending at them was too long
    /// (missed beats upstream).
    pub flagged_too_far: usize,
}

/// Rejects physiologically implausible beats with a 5-beat median filter.
///
/// Scanning left to right against the running cleaned series, each candidate
/// interval is compared to the median of the five nearest intervals (already
/// cleaned on the left, raw on the right) and to the absolute bounds. An
/// interval that is too short drops its beat; one that is too long keeps the
/// beat but flags it.
pub fn clean_beats(beats: &BeatSeries, rule: &ArtifactRule) -> Result<CleanOutcome, ArtifactError> {
    let t = beats.times();
    if t.len() < 5 {
        return Err(ArtifactError::TooFewBeats { n: t.len() });
    }

    let mut kept_times: Vec<f64> = vec![t[0]];
    let mut kept_flags: Vec<bool> = vec![false];
    let mut trusted_rris: Vec<f64> = Vec::new();
    let mut rejected_too_close = 0usize;
    let mut flagged_too_far = 0usize;

    for i in 1..t.len() {
        let candidate = t[i] - *kept_times.last().unwrap();

        // Median window: the candidate plus up to four nearest intervals,
        // alternating trusted (left) and raw upcoming (right).
        let mut window = vec![candidate];
        let mut li = 0usize;
        let mut ri = i; // raw interval t[ri+1] - t[ri]
        while window.len() < 5 && (li < trusted_rris.len() || ri + 1 < t.len()) {
            if li < trusted_rris.len() {
                window.push(trusted_rris[trusted_rris.len() - 1 - li]);
                li += 1;
            }
            if window.len() < 5 && ri + 1 < t.len() {
                window.push(t[ri + 1] - t[ri]);
                ri += 1;
            }
        }
        let med = crate::window::median(&window);

        let too_close = candidate < rule.min_rri_s || candidate < rule.low_ratio * med;
        let too_far = candidate > rule.max_rri_s || candidate > rule.high_ratio * med;
        if too_close {
            rejected_too_close += 1;
            continue;
        }
        kept_times.push(t[i]);
        if too_far {
            kept_flags.push(true);
            flagged_too_far += 1;
        } else {
            kept_flags.push(false);
            trusted_rris.push(candidate);
        }
    }

    let mut series = BeatSeries::new(kept_times, kept_flags, beats.source).unwrap();
    series.flat_signal = beats.flat_signal;
    Ok(CleanOutcome {
        series,
        rejected_too_close,
        flagged_too_far,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Channel;
    use crate::synth;

    fn channel(samples: Vec<f64>, fs: f64) -> Channel {
        Channel {
            label: "test".into(),
            sampling_rate: fs,
            samples,
            physical_unit: "mV".into(),
        }
    }

    fn beats_from(times: &[f64]) -> BeatSeries {
        BeatSeries::unflagged(times.to_vec(), BeatSource::Ecg).unwrap()
    }

    /// Recall/precision of detections against generator truth with a
    /// matching tolerance in seconds.
    fn match_rate(detected: &[f64], truth: &[f64], tol: f64) -> (f64, f64) {
        let hit = |from: &[f64], to: &[f64]| {
            from.iter()
                .filter(|&&t| {
                    let i = to.partition_point(|&v| v < t);
                    let before = i.checked_sub(1).map(|j| (to[j] - t).abs());
                    let after = to.get(i).map(|v| (v - t).abs());
                    before.into_iter().chain(after).any(|d| d <= tol)
                })
                .count() as f64
        };
        let recall = hit(truth, detected) / truth.len() as f64;
        let precision = hit(detected, truth) / detected.len() as f64;
        (recall, precision)
    }

    #[test]
    fn clean_spike_train_at_one_hz() {
        let fs = 200.0;
        let truth: Vec<f64> = (0..60).map(|i| 0.5 + i as f64).collect();
        let x = synth::ecg_like(fs, 60.5, &truth, 1.0);
        let beats = detect_r_peaks(&channel(x, fs), &DetectorParams::ecg()).unwrap();
        assert!(
            (59..=60).contains(&beats.n()),
            "expected 59-60 beats, got {}",
            beats.n()
        );
        for w in beats.times().windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() <= 1.0 / fs + 1e-9);
        }
        let (recall, precision) = match_rate(beats.times(), &truth, 0.06);
        assert!(recall >= 0.98 && precision >= 0.98);
    }

    #[test]
    fn zero_signal_yields_no_beats_with_warning() {
        let beats =
            detect_r_peaks(&channel(vec![0.0; 4000], 200.0), &DetectorParams::ecg()).unwrap();
        assert_eq!(beats.n(), 0);
        assert!(beats.flat_signal);
    }

    #[test]
    fn noisy_spike_train_recall_and_precision() {
        let fs = 200.0;
        let truth: Vec<f64> = (0..60).map(|i| 0.5 + i as f64).collect();
        let clean = synth::ecg_like(fs, 60.5, &truth, 1.0);
        let x = synth::add_white_noise(&clean, 20.0, 11);
        let beats = detect_r_peaks(&channel(x, fs), &DetectorParams::ecg()).unwrap();
        let (recall, precision) = match_rate(beats.times(), &truth, 0.08);
        assert!(recall >= 0.99, "recall {recall}");
        assert!(precision >= 0.99, "precision {precision}");
    }

    #[test]
    fn ppg_pulse_train_at_75_bpm() {
        let fs = 200.0;
        let period = 60.0 / 75.0;
        let truth: Vec<f64> = (0..75).map(|i| 0.4 + i as f64 * period).collect();
        let x = synth::ppg_like(fs, 60.5, &truth, 1.0);
        let beats = detect_ppg_peaks(&channel(x, fs), &DetectorParams::ppg()).unwrap();
        assert!(
            (74..=75).contains(&beats.n()),
            "expected 74-75 beats, got {}",
            beats.n()
        );
    }

    #[test]
    fn ppg_with_baseline_drift() {
        let fs = 200.0;
        let period = 60.0 / 75.0;
        let truth: Vec<f64> = (0..75).map(|i| 0.4 + i as f64 * period).collect();
        let mut x = synth::ppg_like(fs, 60.5, &truth, 1.0);
        synth::add_drift(&mut x, fs, 0.1, 0.5);
        let beats = detect_ppg_peaks(&channel(x, fs), &DetectorParams::ppg()).unwrap();
        let (recall, _) = match_rate(beats.times(), &truth, 0.10);
        assert!(recall >= 0.99, "recall {recall}");
    }

    #[test]
    fn too_short_signal_errors() {
        let err = detect_r_peaks(&channel(vec![0.0; 50], 200.0), &DetectorParams::ecg());
        assert!(matches!(err, Err(DetectError::TooShort { .. })));
    }

    #[test]
    fn amplitude_scaling_by_power_of_two_is_exact() {
        // All thresholds are relative, and scaling by a power of two is
        // exact in binary floating point, so beat times match bitwise.
        let fs = 200.0;
        let truth: Vec<f64> = (0..60).map(|i| 0.5 + i as f64).collect();
        let clean = synth::ecg_like(fs, 60.5, &truth, 1.0);
        let x = synth::add_white_noise(&clean, 20.0, 3);
        let scaled: Vec<f64> = x.iter().map(|v| v * 4.0).collect();
        let a = detect_r_peaks(&channel(x, fs), &DetectorParams::ecg()).unwrap();
        let b = detect_r_peaks(&channel(scaled, fs), &DetectorParams::ecg()).unwrap();
        assert_eq!(a.times(), b.times());
    }

    #[test]
    fn time_shift_moves_beats_by_the_shift() {
        let fs = 200.0;
        let truth: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
        let x = synth::ecg_like(fs, 42.0, &truth, 1.0);
        let shift = 40usize; // 0.2 s
        let mut shifted = vec![0.0; shift];
        shifted.extend_from_slice(&x[..x.len() - shift]);
        let a = detect_r_peaks(&channel(x, fs), &DetectorParams::ecg()).unwrap();
        let b = detect_r_peaks(&channel(shifted, fs), &DetectorParams::ecg()).unwrap();
        // Compare away from the edges.
        let inner_a: Vec<f64> = a.times().iter().copied().filter(|t| *t > 2.0 && *t < 38.0).collect();
        for t in &inner_a {
            let want = t + shift as f64 / fs;
            assert!(
                b.times().iter().any(|&u| (u - want).abs() < 1.5 / fs),
                "no shifted counterpart for {t}"
            );
        }
    }

    #[test]
    fn constant_rris_pass_cleaning() {
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let out = clean_beats(&beats_from(&times), &ArtifactRule::default()).unwrap();
        assert_eq!(out.series.times(), &times[..]);
        assert_eq!(out.rejected_too_close, 0);
        assert_eq!(out.flagged_too_far, 0);
    }

    #[test]
    fn short_rri_is_rejected_by_the_median_rule() {
        // RRIs [1.0, 1.0, 0.3, 1.0, 1.0]: the median of the five
        // surrounding intervals is 1.0, and 0.3 < 0.7 * 1.0.
        let times = [0.0, 1.0, 2.0, 2.3, 3.3, 4.3];
        let out = clean_beats(&beats_from(&times), &ArtifactRule::default()).unwrap();
        assert_eq!(out.rejected_too_close, 1);
        assert_eq!(out.series.times(), &[0.0, 1.0, 2.0, 3.3, 4.3]);
        // The bridged interval 2.0 -> 3.3 is 1.3, within 1.3 * median.
        assert_eq!(out.flagged_too_far, 0);
    }

    #[test]
    fn four_beats_cannot_form_a_window() {
        let err = clean_beats(&beats_from(&[0.0, 1.0, 2.0, 3.0]), &ArtifactRule::default());
        assert!(matches!(err, Err(ArtifactError::TooFewBeats { n: 4 })));
    }

    #[test]
    fn long_gap_flags_but_keeps_the_anchor_beat() {
        let times = [0.0, 1.0, 2.0, 7.0, 8.0, 9.0, 10.0];
        let out = clean_beats(&beats_from(&times), &ArtifactRule::default()).unwrap();
        assert_eq!(out.series.times(), &times[..]);
        assert_eq!(out.flagged_too_far, 1);
        assert!(out.series.flags()[3]);
        assert!(!out.series.flags()[4]);
    }

    #[test]
    fn cleaning_a_clean_series_is_identity() {
        let mut times = Vec::new();
        let mut t = 0.0;
        for i in 0..50 {
            t += 0.9 + 0.15 * ((i * 7 % 10) as f64 / 10.0);
            times.push(t);
        }
        let beats = beats_from(&times);
        let once = clean_beats(&beats, &ArtifactRule::default()).unwrap();
        assert_eq!(once.series.times(), &times[..]);
        let twice = clean_beats(&once.series, &ArtifactRule::default()).unwrap();
        assert_eq!(twice.series.times(), once.series.times());
        assert_eq!(twice.series.flags(), once.series.flags());
    }
}
