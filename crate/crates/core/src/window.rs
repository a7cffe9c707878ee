//! Context windows: cutting the 4 Hz IHR series into labeled inputs, median
//! normalization, and the binary windows file.
//!
//! A window ends exactly at the end of its labeled 30 s epoch and extends
//! `context_seconds` into the past. Epoch boundaries are snapped to the
//! nearest grid sample (at most 0.125 s of jitter). An epoch is excluded —
//! and the exclusion recorded in a ledger, never silently dropped — when its
//! label is unknown, its full context does not fit inside the IHR domain, or
//! its final 30 s contain fewer than five detected beats.

use crate::beat::BeatSeries;
use crate::ihr::{IhrSeries, IHR_RATE_HZ};
use crate::ingest::{Hypnogram, StageLabel, EPOCH_SECONDS};
use std::io::{Read, Write};
use thiserror::Error;

/// Supported context lengths in seconds.
pub const CONTEXT_CHOICES: [u32; 4] = [30, 120, 300, 600];

/// Minimum detected beats inside the labeled epoch for it to be usable.
pub const MIN_BEATS_PER_EPOCH: usize = 5;

/// One labeled context window of raw (un-normalized) IHR values.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    /// `context_seconds * 4` IHR samples ending at the epoch end.
    pub input: Vec<f64>,
    pub epoch_index: u32,
    pub label: StageLabel,
    pub subject_id: String,
}

/// Why an epoch produced no window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Label is unknown/artifact.
    UnknownLabel,
    /// The window would extend outside the IHR domain.
    InsufficientContext,
    /// Fewer than five detected beats in the labeled 30 s.
    TooFewBeats,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            RejectReason::UnknownLabel => "unknown or artifact label",
            RejectReason::InsufficientContext => "insufficient context in IHR domain",
            RejectReason::TooFewBeats => "fewer than five R peaks in epoch",
        };
        f.write_str(text)
    }
}

/// Per-epoch exclusion record.
#[derive(Debug, Clone, Default)]
pub struct RejectionLedger {
    pub entries: Vec<(u32, RejectReason)>,
}

impl RejectionLedger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, reason: RejectReason) -> usize {
        self.entries.iter().filter(|(_, r)| *r == reason).count()
    }
}

#[derive(Debug, Error)]
pub enum WindowError {
    #[error("context_seconds {0} not one of {CONTEXT_CHOICES:?}")]
    BadContext(u32),
    #[error("window input is empty")]
    EmptyInput,
}

/// Cuts one window per labeled epoch, recording exclusions in the ledger.
/// `windows.len() + ledger.len()` always equals the epoch count.
pub fn cut_windows(
    series: &IhrSeries,
    hypnogram: &Hypnogram,
    context_seconds: u32,
    beats: &BeatSeries,
) -> Result<(Vec<ContextWindow>, RejectionLedger), WindowError> {
    if !CONTEXT_CHOICES.contains(&context_seconds) {
        return Err(WindowError::BadContext(context_seconds));
    }
    let window_len = (context_seconds as usize) * IHR_RATE_HZ as usize;
    let mut windows = Vec::new();
    let mut ledger = RejectionLedger::default();

    for (i, &label) in hypnogram.labels.iter().enumerate() {
        let epoch_index = i as u32;
        if label == StageLabel::Unknown {
            ledger.entries.push((epoch_index, RejectReason::UnknownLabel));
            continue;
        }
        let epoch_start = i as f64 * EPOCH_SECONDS as f64;
        let epoch_end = epoch_start + EPOCH_SECONDS as f64;
        // Snap the epoch end to the nearest grid sample (exclusive index).
        let end_idx = ((epoch_end - series.t0) * IHR_RATE_HZ).round() as i64;
        let start_idx = end_idx - window_len as i64;
        if start_idx < 0 || end_idx > series.len() as i64 {
            ledger
                .entries
                .push((epoch_index, RejectReason::InsufficientContext));
            continue;
        }
        if beats.count_in(epoch_start, epoch_end) < MIN_BEATS_PER_EPOCH {
            ledger.entries.push((epoch_index, RejectReason::TooFewBeats));
            continue;
        }
        windows.push(ContextWindow {
            input: series.values[start_idx as usize..end_idx as usize].to_vec(),
            epoch_index,
            label,
            subject_id: hypnogram.subject_id.clone(),
        });
    }
    Ok((windows, ledger))
}

/// Median; even-length inputs average the two central order statistics.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Median-subtracts a window (the network's input normalization).
pub fn normalize_window(input: &[f64]) -> Result<Vec<f64>, WindowError> {
    if input.is_empty() {
        return Err(WindowError::EmptyInput);
    }
    let m = median(input);
    Ok(input.iter().map(|v| v - m).collect())
}

// ---------------------------------------------------------------------------
// Windows file: magic "SOMN", version u16, context seconds u32, count u32,
// then per window: subject length u16 + bytes, epoch index u32, label u8,
// context_seconds*4 little-endian f64 values.
// ---------------------------------------------------------------------------

pub const WINDOWS_MAGIC: &[u8; 4] = b"SOMN";
pub const WINDOWS_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum WindowFileError {
    #[error("bad magic: not a windows file")]
    BadMagic,
    #[error("unsupported windows-file version {0}")]
    BadVersion(u16),
    #[error("file ends early: {0}")]
    Truncated(&'static str),
    #[error("unknown label code {0}")]
    BadLabel(u8),
    #[error("window length mismatch: header says {expected}, window {index} has {actual}")]
    LengthMismatch {
        expected: usize,
        index: usize,
        actual: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_windows<W: Write>(
    out: &mut W,
    context_seconds: u32,
    windows: &[ContextWindow],
) -> Result<(), WindowFileError> {
    let window_len = context_seconds as usize * IHR_RATE_HZ as usize;
    out.write_all(WINDOWS_MAGIC)?;
    out.write_all(&WINDOWS_VERSION.to_le_bytes())?;
    out.write_all(&context_seconds.to_le_bytes())?;
    out.write_all(&(windows.len() as u32).to_le_bytes())?;
    for (index, w) in windows.iter().enumerate() {
        if w.input.len() != window_len {
            return Err(WindowFileError::LengthMismatch {
                expected: window_len,
                index,
                actual: w.input.len(),
            });
        }
        let sid = w.subject_id.as_bytes();
        out.write_all(&(sid.len() as u16).to_le_bytes())?;
        out.write_all(sid)?;
        out.write_all(&w.epoch_index.to_le_bytes())?;
        out.write_all(&[w.label.code()])?;
        for v in &w.input {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_windows<R: Read>(input: &mut R) -> Result<(u32, Vec<ContextWindow>), WindowFileError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &'static str| -> Result<&[u8], WindowFileError> {
        if *pos + n > bytes.len() {
            return Err(WindowFileError::Truncated(what));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4, "magic")? != WINDOWS_MAGIC {
        return Err(WindowFileError::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut pos, 2, "version")?.try_into().unwrap());
    if version != WINDOWS_VERSION {
        return Err(WindowFileError::BadVersion(version));
    }
    let context_seconds =
        u32::from_le_bytes(take(&mut pos, 4, "context")?.try_into().unwrap());
    let count = u32::from_le_bytes(take(&mut pos, 4, "count")?.try_into().unwrap());
    let window_len = context_seconds as usize * IHR_RATE_HZ as usize;

    let mut windows = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let sid_len =
            u16::from_le_bytes(take(&mut pos, 2, "subject length")?.try_into().unwrap());
        let sid = String::from_utf8_lossy(take(&mut pos, sid_len as usize, "subject id")?)
            .into_owned();
        let epoch_index =
            u32::from_le_bytes(take(&mut pos, 4, "epoch index")?.try_into().unwrap());
        let code = take(&mut pos, 1, "label")?[0];
        let label = StageLabel::from_code(code).ok_or(WindowFileError::BadLabel(code))?;
        let raw = take(&mut pos, window_len * 8, "window values")?;
        let input = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        windows.push(ContextWindow {
            input,
            epoch_index,
            label,
            subject_id: sid,
        });
    }
    Ok((context_seconds, windows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beat::{BeatSeries, BeatSource};
    use crate::ihr::{ihr_knots, pchip_resample, IhrSource};
    use approx::assert_relative_eq;

    fn hypnogram(labels: Vec<StageLabel>) -> Hypnogram {
        Hypnogram {
            subject_id: "s1".into(),
            labels,
        }
    }

    /// Regular beat train from `start` to at least `end`, plus an early
    /// extra beat so the IHR domain starts near zero.
    fn beat_train(start: f64, period: f64, end: f64) -> BeatSeries {
        let mut times = vec![start, start + 0.1];
        let mut t = start + 0.1 + period;
        while t <= end {
            times.push(t);
            t += period;
        }
        BeatSeries::unflagged(times, BeatSource::Ecg).unwrap()
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[60.0, 62.0, 64.0, 120.0]), 63.0);
        assert_eq!(median(&[5.0]), 5.0);
    }

    #[test]
    fn normalize_subtracts_the_median() {
        assert_eq!(
            normalize_window(&[72.0, 72.0, 72.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        assert_eq!(
            normalize_window(&[60.0, 62.0, 64.0, 120.0]).unwrap(),
            vec![-3.0, -1.0, 1.0, 57.0]
        );
        let once = normalize_window(&[60.0, 62.0, 64.0, 120.0]).unwrap();
        assert_eq!(normalize_window(&once).unwrap(), once);
        assert!(normalize_window(&[]).is_err());
    }

    #[test]
    fn seven_hour_recording_loses_only_short_context_epochs() {
        // 840 epochs of 30 s; a 300 s context needs 9 leading epochs'
        // worth of history, so 831 windows remain.
        let beats = beat_train(0.0, 0.75, 25_200.2);
        let knots = ihr_knots(&beats).unwrap();
        let series = pchip_resample(&knots, IhrSource::EcgIhr).unwrap();
        let hyp = hypnogram(vec![StageLabel::N2; 840]);
        let (windows, ledger) = cut_windows(&series, &hyp, 300, &beats).unwrap();
        assert_eq!(windows.len() + ledger.len(), 840);
        assert_eq!(
            ledger.count(RejectReason::InsufficientContext),
            ledger.len()
        );
        assert_eq!(windows.len(), 831);
        assert_eq!(windows[0].epoch_index, 9);
        assert_eq!(windows[0].input.len(), 1200);
    }

    #[test]
    fn epoch_with_too_few_beats_is_excluded_with_reason() {
        // Beats cover 10 minutes, but epoch 5 ([150, 180) s) only has 4.
        let mut times: Vec<f64> = Vec::new();
        let mut t = 0.05;
        while t < 600.0 {
            let in_sparse = (150.0..180.0).contains(&t);
            times.push(t);
            t += if in_sparse { 8.0 } else { 0.75 };
        }
        let beats = BeatSeries::unflagged(times, BeatSource::Ecg).unwrap();
        let knots = ihr_knots(&beats).unwrap();
        let series = pchip_resample(&knots, IhrSource::EcgIhr).unwrap();
        let hyp = hypnogram(vec![StageLabel::N2; 19]);
        let (windows, ledger) = cut_windows(&series, &hyp, 30, &beats).unwrap();
        assert!(beats.count_in(150.0, 180.0) < MIN_BEATS_PER_EPOCH);
        assert!(ledger
            .entries
            .iter()
            .any(|(i, r)| *i == 5 && *r == RejectReason::TooFewBeats));
        assert_eq!(windows.len() + ledger.len(), 19);
    }

    #[test]
    fn first_epochs_lack_context_and_unknown_is_excluded() {
        let beats = beat_train(0.0, 0.75, 400.0);
        let knots = ihr_knots(&beats).unwrap();
        let series = pchip_resample(&knots, IhrSource::EcgIhr).unwrap();
        let mut labels = vec![StageLabel::Wake; 12];
        labels[11] = StageLabel::Unknown;
        let hyp = hypnogram(labels);
        let (windows, ledger) = cut_windows(&series, &hyp, 300, &beats).unwrap();
        // Epochs 0-8 lack 300 s of history; epoch 11 is unknown.
        assert_eq!(windows.len(), 2);
        assert_eq!(ledger.count(RejectReason::InsufficientContext), 9);
        assert_eq!(ledger.count(RejectReason::UnknownLabel), 1);
    }

    #[test]
    fn window_values_come_from_the_grid() {
        let beats = beat_train(0.0, 0.75, 400.0);
        let knots = ihr_knots(&beats).unwrap();
        let series = pchip_resample(&knots, IhrSource::EcgIhr).unwrap();
        let hyp = hypnogram(vec![StageLabel::N2; 10]);
        let (windows, _) = cut_windows(&series, &hyp, 30, &beats).unwrap();
        let w = &windows[1];
        assert_eq!(w.input.len(), 120);
        // The regular 0.75 s train settles to 80 bpm away from the start.
        for v in &w.input {
            assert_relative_eq!(*v, 80.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn bad_context_is_rejected() {
        let beats = beat_train(0.0, 0.75, 100.0);
        let knots = ihr_knots(&beats).unwrap();
        let series = pchip_resample(&knots, IhrSource::EcgIhr).unwrap();
        let hyp = hypnogram(vec![StageLabel::N2; 2]);
        assert!(matches!(
            cut_windows(&series, &hyp, 45, &beats),
            Err(WindowError::BadContext(45))
        ));
    }

    #[test]
    fn windows_file_roundtrip() {
        let windows = vec![
            ContextWindow {
                input: (0..120).map(|i| 60.0 + (i as f64) * 0.01).collect(),
                epoch_index: 4,
                label: StageLabel::Wake,
                subject_id: "alpha".into(),
            },
            ContextWindow {
                input: (0..120).map(|i| 70.0 - (i as f64) * 0.02).collect(),
                epoch_index: 5,
                label: StageLabel::Rem,
                subject_id: "beta".into(),
            },
        ];
        let mut buf = Vec::new();
        write_windows(&mut buf, 30, &windows).unwrap();
        let (ctx, back) = read_windows(&mut buf.as_slice()).unwrap();
        assert_eq!(ctx, 30);
        assert_eq!(back, windows);
    }

    #[test]
    fn windows_file_rejects_bad_magic_and_truncation() {
        let windows = vec![ContextWindow {
            input: vec![60.0; 120],
            epoch_index: 0,
            label: StageLabel::N2,
            subject_id: "s".into(),
        }];
        let mut buf = Vec::new();
        write_windows(&mut buf, 30, &windows).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_windows(&mut bad.as_slice()),
            Err(WindowFileError::BadMagic)
        ));

        let short = &buf[..buf.len() - 10];
        assert!(matches!(
            read_windows(&mut &short[..]),
            Err(WindowFileError::Truncated(_))
        ));
    }
}
