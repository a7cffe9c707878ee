//! Signal-file and annotation-file parsing.
//!
//! Supported inputs are continuous EDF/EDF+ recordings with 16-bit samples,
//! single-column CSV signals, and `epoch_index,label` CSV hypnograms. All
//! parsers are pure functions of their input bytes; the resulting values are
//! immutable and safe to share across threads.

mod csv_signal;
mod edf;
mod hypnogram;

pub use csv_signal::parse_csv_signal;
pub use edf::parse_edf;
pub use hypnogram::{parse_hypnogram, LabelVocabulary};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Seconds covered by one scored epoch.
pub const EPOCH_SECONDS: u32 = 30;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("byte {offset}: field `{field}` is not ASCII numeric: {text:?}")]
    NonAsciiNumeric {
        field: &'static str,
        offset: usize,
        text: String,
    },
    #[error("byte {offset}: {message}")]
    BadHeader { offset: usize, message: String },
    #[error("signal {signal} has digital_max == digital_min ({value})")]
    FlatDigitalRange { signal: usize, value: i32 },
    #[error("truncated data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("discontinuous EDF+D recordings are not supported")]
    Discontinuous,
    #[error("line {line}: not a numeric sample: {text:?}")]
    NonNumericLine { line: usize, text: String },
    #[error("no samples in input")]
    Empty,
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("duplicate epoch index {index}")]
    DuplicateEpoch { index: u32 },
    #[error("negative epoch index {index}")]
    NegativeEpoch { index: i64 },
    #[error("{0}")]
    Invalid(String),
}

/// One sampled channel in physical units.
#[derive(Debug, Clone)]
pub struct Channel {
    pub label: String,
    /// Samples per second.
    pub sampling_rate: f64,
    pub samples: Vec<f64>,
    pub physical_unit: String,
}

impl Channel {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate
    }
}

/// A multi-channel recording with per-channel sampling rates.
#[derive(Debug, Clone)]
pub struct Recording {
    pub subject_id: String,
    pub channels: Vec<Channel>,
    /// Wall-clock start as recorded in the source file, when present.
    pub start_time: Option<String>,
}

impl Recording {
    /// Validates the recording invariants: positive rates, non-empty
    /// channels, unique labels.
    pub fn new(
        subject_id: String,
        channels: Vec<Channel>,
        start_time: Option<String>,
    ) -> Result<Self, ParseError> {
        let mut seen = BTreeSet::new();
        for ch in &channels {
            if !(ch.sampling_rate > 0.0) {
                return Err(ParseError::Invalid(format!(
                    "channel {:?} has non-positive sampling rate {}",
                    ch.label, ch.sampling_rate
                )));
            }
            if ch.samples.is_empty() {
                return Err(ParseError::Empty);
            }
            if !seen.insert(ch.label.clone()) {
                return Err(ParseError::Invalid(format!(
                    "duplicate channel label {:?}",
                    ch.label
                )));
            }
        }
        Ok(Recording {
            subject_id,
            channels,
            start_time,
        })
    }

    /// Channel by exact label, falling back to a unique case-insensitive
    /// substring match.
    pub fn channel(&self, label: &str) -> Option<&Channel> {
        if let Some(ch) = self.channels.iter().find(|c| c.label == label) {
            return Some(ch);
        }
        let needle = label.to_ascii_lowercase();
        let mut hits = self
            .channels
            .iter()
            .filter(|c| c.label.to_ascii_lowercase().contains(&needle));
        match (hits.next(), hits.next()) {
            (Some(ch), None) => Some(ch),
            _ => None,
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.channels
            .iter()
            .map(Channel::duration_seconds)
            .fold(0.0, f64::max)
    }
}

/// Technologist-scored stage of one 30 s epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageLabel {
    Wake,
    Rem,
    N1,
    N2,
    N3,
    /// Unscored, artifact, or outside the vocabulary. Carried through and
    /// excluded later by cohort assembly so exclusions stay auditable.
    Unknown,
}

impl StageLabel {
    pub fn code(self) -> u8 {
        match self {
            StageLabel::Wake => 0,
            StageLabel::Rem => 1,
            StageLabel::N1 => 2,
            StageLabel::N2 => 3,
            StageLabel::N3 => 4,
            StageLabel::Unknown => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => StageLabel::Wake,
            1 => StageLabel::Rem,
            2 => StageLabel::N1,
            3 => StageLabel::N2,
            4 => StageLabel::N3,
            5 => StageLabel::Unknown,
            _ => return None,
        })
    }
}

/// Per-epoch stage labels. Epoch `i` covers `[30·i, 30·(i+1))` seconds from
/// recording start.
#[derive(Debug, Clone)]
pub struct Hypnogram {
    pub subject_id: String,
    pub labels: Vec<StageLabel>,
}

impl Hypnogram {
    /// Checks the hypnogram against a recording duration: the scored span
    /// may overhang the recording by at most one epoch.
    pub fn check_against_duration(&self, duration_seconds: f64) -> Result<(), ParseError> {
        let span = self.labels.len() as f64 * EPOCH_SECONDS as f64;
        if span > duration_seconds + EPOCH_SECONDS as f64 {
            return Err(ParseError::Invalid(format!(
                "hypnogram spans {span} s but recording lasts {duration_seconds} s"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

/// Per-subject covariates used by the per-subject regressions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub subject_id: String,
    /// Apnea-hypopnea index, events per hour.
    #[serde(default)]
    pub ahi: Option<f64>,
    #[serde(default)]
    pub bmi: Option<f64>,
    #[serde(default)]
    pub age: Option<f64>,
    #[serde(default)]
    pub sex: Option<Sex>,
}

impl SubjectMeta {
    pub fn validate(&self) -> Result<(), ParseError> {
        if let Some(ahi) = self.ahi {
            if ahi < 0.0 {
                return Err(ParseError::Invalid(format!(
                    "subject {:?}: negative AHI {ahi}",
                    self.subject_id
                )));
            }
        }
        Ok(())
    }
}
