//! Hypnogram CSV reader: `epoch_index,label` rows with an optional header.
//!
//! Label spellings differ between databases, so the text-to-stage mapping is
//! supplied as a vocabulary (usually from the run config) instead of being
//! hardcoded. Anything outside the vocabulary maps to [`StageLabel::Unknown`]
//! and is carried through for later, auditable exclusion.

use super::{Hypnogram, ParseError, StageLabel};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Mapping from annotation text to stage labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVocabulary {
    pub map: BTreeMap<String, StageLabel>,
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        let mut map = BTreeMap::new();
        for (k, v) in [
            ("W", StageLabel::Wake),
            ("R", StageLabel::Rem),
            ("REM", StageLabel::Rem),
            ("1", StageLabel::N1),
            ("2", StageLabel::N2),
            ("3", StageLabel::N3),
            ("N1", StageLabel::N1),
            ("N2", StageLabel::N2),
            ("N3", StageLabel::N3),
        ] {
            map.insert(k.to_owned(), v);
        }
        LabelVocabulary { map }
    }
}

impl LabelVocabulary {
    pub fn lookup(&self, text: &str) -> StageLabel {
        self.map
            .get(text.trim())
            .copied()
            .unwrap_or(StageLabel::Unknown)
    }
}

/// Parses `epoch_index,label` rows into a [`Hypnogram`]. Rows may arrive in
/// any order; missing indices are filled with `Unknown`. Duplicate or
/// negative indices are errors.
pub fn parse_hypnogram(
    text: &str,
    vocab: &LabelVocabulary,
    subject_id: &str,
) -> Result<Hypnogram, ParseError> {
    let mut entries: BTreeMap<u32, StageLabel> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.splitn(2, ',');
        let index_text = parts.next().unwrap_or("").trim();
        let label_text = parts.next().map(str::trim).unwrap_or("");
        let index: i64 = match index_text.parse() {
            Ok(v) => v,
            Err(_) if i == 0 => continue, // optional header line
            Err(_) => {
                return Err(ParseError::BadRow {
                    line: line_no,
                    message: format!("epoch index {index_text:?} is not an integer"),
                })
            }
        };
        if index < 0 {
            return Err(ParseError::NegativeEpoch { index });
        }
        let index = index as u32;
        if entries.insert(index, vocab.lookup(label_text)).is_some() {
            return Err(ParseError::DuplicateEpoch { index });
        }
    }
    if entries.is_empty() {
        return Err(ParseError::Empty);
    }
    let last = *entries.keys().next_back().unwrap();
    let labels = (0..=last)
        .map(|i| entries.get(&i).copied().unwrap_or(StageLabel::Unknown))
        .collect();
    Ok(Hypnogram {
        subject_id: subject_id.to_owned(),
        labels,
    })
}
