//! Synthetic signal and cohort generators for tests, fixtures, and the
//! browser demo. Generators are the ground truth their consumers are
//! checked against, so they stay deliberately simple.

use crate::cohort::BinaryLabel;
use crate::ingest::Recording;
use crate::rng::{stream_rng, Stream};
use rand::Rng;

/// ECG-like signal: a narrow raised-cosine pulse (~50 ms) at each beat time
/// on a zero baseline.
pub fn ecg_like(fs: f64, duration_s: f64, beat_times: &[f64], amplitude: f64) -> Vec<f64> {
    pulse_train(fs, duration_s, beat_times, amplitude, 0.05)
}

/// PPG-like signal: a wide raised-cosine pulse (~400 ms) per beat.
pub fn ppg_like(fs: f64, duration_s: f64, beat_times: &[f64], amplitude: f64) -> Vec<f64> {
    pulse_train(fs, duration_s, beat_times, amplitude, 0.4)
}

fn pulse_train(
    fs: f64,
    duration_s: f64,
    beat_times: &[f64],
    amplitude: f64,
    width_s: f64,
) -> Vec<f64> {
    let n = (duration_s * fs).round() as usize;
    let mut x = vec![0.0_f64; n];
    let half = width_s / 2.0;
    for &tc in beat_times {
        let lo = (((tc - half) * fs).floor().max(0.0)) as usize;
        let hi = ((((tc + half) * fs).ceil()) as usize).min(n);
        for i in lo..hi {
            let t = i as f64 / fs;
            if (t - tc).abs() <= half {
                x[i] += amplitude * 0.5
                    * (1.0 + (std::f64::consts::PI * (t - tc) / half).cos());
            }
        }
    }
    x
}

/// Adds white Gaussian noise at the given SNR (dB) relative to the signal's
/// RMS. Deterministic in `seed`.
pub fn add_white_noise(x: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    let sigma = rms / 10f64.powf(snr_db / 20.0);
    let mut rng = stream_rng(seed, Stream::Synth);
    x.iter().map(|v| v + sigma * randn(&mut rng)).collect()
}

/// Adds a sinusoidal baseline drift in place.
pub fn add_drift(x: &mut [f64], fs: f64, freq_hz: f64, amplitude: f64) {
    for (i, v) in x.iter_mut().enumerate() {
        *v += amplitude * (2.0 * std::f64::consts::PI * freq_hz * i as f64 / fs).sin();
    }
}

/// Standard normal deviate via Box-Muller.
pub fn randn<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Beat times with a slow sinusoidal rate modulation, for demo IHR curves:
/// instantaneous rate `bpm * (1 + depth * sin(2*pi*f_mod*t))`.
pub fn modulated_beat_times(
    mean_bpm: f64,
    depth: f64,
    mod_freq_hz: f64,
    duration_s: f64,
    jitter_s: f64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Synth);
    let mut times = Vec::new();
    let mut t = 0.2;
    while t < duration_s {
        times.push(t + jitter_s * randn(&mut rng));
        let rate = mean_bpm * (1.0 + depth * (2.0 * std::f64::consts::PI * mod_freq_hz * t).sin());
        t += 60.0 / rate.max(20.0);
    }
    times.retain(|&v| v > 0.0);
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    times
}

/// Separable synthetic cohort at 4 Hz: positives carry a 0.25 Hz, +/-15 bpm
/// oscillation burst; negatives are flat 60 bpm with small noise. Returns
/// raw (un-normalized) windows and labels, positives first.
pub fn separable_cohort(
    n_pos: usize,
    n_neg: usize,
    window_len: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<BinaryLabel>) {
    let mut rng = stream_rng(seed, Stream::Synth);
    let mut inputs = Vec::with_capacity(n_pos + n_neg);
    let mut labels = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..n_pos {
        // Burst covers at least half the window at a random position.
        let burst_len = window_len / 2 + rng.random_range(0..=window_len / 4);
        let start = rng.random_range(0..=window_len - burst_len);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let w: Vec<f64> = (0..window_len)
            .map(|k| {
                let t = k as f64 / crate::ihr::IHR_RATE_HZ;
                let mut v = 60.0 + 0.5 * randn(&mut rng);
                if (start..start + burst_len).contains(&k) {
                    v += 15.0 * (std::f64::consts::TAU * 0.25 * t + phase).sin();
                }
                v
            })
            .collect();
        inputs.push(w);
        labels.push(BinaryLabel::Positive);
    }
    for _ in 0..n_neg {
        let w: Vec<f64> = (0..window_len)
            .map(|_| 60.0 + 0.5 * randn(&mut rng))
            .collect();
        inputs.push(w);
        labels.push(BinaryLabel::Negative);
    }
    (inputs, labels)
}

/// Serializes a recording as a 16-bit EDF byte stream, for building test
/// fixtures (EDF writing is not a supported pipeline output). Each channel
/// must contain a whole number of records of `record_duration` seconds.
pub fn edf_bytes(recording: &Recording, record_duration: f64) -> Result<Vec<u8>, String> {
    if recording.channels.is_empty() {
        return Err("recording has no channels".into());
    }
    let mut samples_per_record = Vec::new();
    let mut n_records = None;
    for ch in &recording.channels {
        let spr = ch.sampling_rate * record_duration;
        if (spr - spr.round()).abs() > 1e-9 || spr < 1.0 {
            return Err(format!(
                "rate {} with record duration {record_duration} gives non-integer samples/record",
                ch.sampling_rate
            ));
        }
        let spr = spr.round() as usize;
        if ch.samples.len() % spr != 0 {
            return Err(format!(
                "channel {:?}: {} samples is not a whole number of {spr}-sample records",
                ch.label,
                ch.samples.len()
            ));
        }
        let records = ch.samples.len() / spr;
        if *n_records.get_or_insert(records) != records {
            return Err("channels disagree on record count".into());
        }
        samples_per_record.push(spr);
    }
    let n_records = n_records.unwrap();

    // Physical range per channel: [-3.2768, 3.2767] scaled by a power of two
    // so quantization stays exact-friendly; digital range [-32768, 32767].
    let mut ranges = Vec::new();
    for ch in &recording.channels {
        let mut scale = 1.0_f64;
        let (mut pmin, mut pmax) = (-3.2768, 3.2767);
        let lo = ch.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ch.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        while lo < pmin || hi > pmax {
            scale *= 2.0;
            pmin = -3.2768 * scale;
            pmax = 3.2767 * scale;
            if scale > 16.0 {
                return Err(format!(
                    "channel {:?} amplitude too large for the fixture writer",
                    ch.label
                ));
            }
        }
        // Use the values as they will be parsed back from the header text.
        let pmin: f64 = format!("{pmin:.4}").parse().unwrap();
        let pmax: f64 = format!("{pmax:.4}").parse().unwrap();
        ranges.push((pmin, pmax));
    }

    let ns = recording.channels.len();
    let mut out = Vec::new();
    let field = |out: &mut Vec<u8>, text: &str, width: usize| {
        let mut bytes = text.as_bytes().to_vec();
        assert!(bytes.len() <= width, "field {text:?} exceeds {width} bytes");
        bytes.resize(width, b' ');
        out.extend_from_slice(&bytes);
    };

    field(&mut out, "0", 8);
    field(&mut out, &recording.subject_id, 80);
    field(&mut out, "synthetic fixture", 80);
    field(&mut out, "01.01.20", 8);
    field(&mut out, "00.00.00", 8);
    field(&mut out, &format!("{}", 256 * (ns + 1)), 8);
    field(&mut out, "", 44);
    field(&mut out, &format!("{n_records}"), 8);
    field(&mut out, &format_num(record_duration), 8);
    field(&mut out, &format!("{ns}"), 4);

    for ch in &recording.channels {
        field(&mut out, &ch.label, 16);
    }
    for _ in 0..ns {
        field(&mut out, "synthetic", 80);
    }
    for ch in &recording.channels {
        field(&mut out, &ch.physical_unit, 8);
    }
    for &(pmin, _) in &ranges {
        field(&mut out, &format!("{pmin:.4}"), 8);
    }
    for &(_, pmax) in &ranges {
        field(&mut out, &format!("{pmax:.4}"), 8);
    }
    for _ in 0..ns {
        field(&mut out, "-32768", 8);
    }
    for _ in 0..ns {
        field(&mut out, "32767", 8);
    }
    for _ in 0..ns {
        field(&mut out, "", 80);
    }
    for &spr in &samples_per_record {
        field(&mut out, &format!("{spr}"), 8);
    }
    for _ in 0..ns {
        field(&mut out, "", 32);
    }

    for record in 0..n_records {
        for (c, ch) in recording.channels.iter().enumerate() {
            let (pmin, pmax) = ranges[c];
            let gain = (pmax - pmin) / 65535.0;
            let spr = samples_per_record[c];
            for k in 0..spr {
                let v = ch.samples[record * spr + k];
                let digital = (((v - pmin) / gain) - 32768.0).round();
                let digital = digital.clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&digital.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn format_num(v: f64) -> String {
    if v == v.trunc() {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
