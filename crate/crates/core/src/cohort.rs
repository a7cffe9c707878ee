//! Cohort assembly: label remapping for the two binary tasks, subject-level
//! inclusion rules, and class statistics.
//!
//! Model assessment is inter-individual, so cohorts keep a per-subject index
//! and the train/validate split is by whole subjects. Inclusion rules apply
//! to training cohorts only; validation cohorts are never filtered.

use crate::ingest::StageLabel;
use crate::window::ContextWindow;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Binary classification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Positive class = wake.
    WakeVsSleep,
    /// Positive class = REM; wake epochs are discarded.
    RemVsNrem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    Positive,
    Negative,
}

/// Result of remapping a stage label under a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Remapped {
    Keep(BinaryLabel),
    Exclude,
}

/// Stage-to-binary remapping. Unknown labels are always excluded; the REM
/// task additionally excludes wake.
pub fn remap_label(label: StageLabel, task: Task) -> Remapped {
    use BinaryLabel::*;
    use StageLabel::*;
    match task {
        Task::WakeVsSleep => match label {
            Wake => Remapped::Keep(Positive),
            Rem | N1 | N2 | N3 => Remapped::Keep(Negative),
            Unknown => Remapped::Exclude,
        },
        Task::RemVsNrem => match label {
            Rem => Remapped::Keep(Positive),
            N1 | N2 | N3 => Remapped::Keep(Negative),
            Wake | Unknown => Remapped::Exclude,
        },
    }
}

/// One labeled example.
#[derive(Debug, Clone)]
pub struct Example {
    pub window: ContextWindow,
    pub label: BinaryLabel,
}

/// A task-labeled example collection with a per-subject index.
#[derive(Debug, Clone)]
pub struct Cohort {
    examples: Vec<Example>,
    task: Task,
    by_subject: BTreeMap<String, Vec<usize>>,
    positives: usize,
    negatives: usize,
}

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("cohort is empty after filtering")]
    Empty,
}

impl Cohort {
    /// Remaps window labels under `task`, dropping excluded epochs. Returns
    /// the cohort and the number of excluded windows (conservation:
    /// `examples + excluded == windows`).
    pub fn assemble(windows: Vec<ContextWindow>, task: Task) -> (Cohort, usize) {
        let mut examples = Vec::with_capacity(windows.len());
        let mut excluded = 0usize;
        for window in windows {
            match remap_label(window.label, task) {
                Remapped::Keep(label) => examples.push(Example { window, label }),
                Remapped::Exclude => excluded += 1,
            }
        }
        (Cohort::from_examples(examples, task), excluded)
    }

    fn from_examples(examples: Vec<Example>, task: Task) -> Cohort {
        let mut by_subject: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut positives = 0;
        let mut negatives = 0;
        for (i, ex) in examples.iter().enumerate() {
            by_subject
                .entry(ex.window.subject_id.clone())
                .or_default()
                .push(i);
            match ex.label {
                BinaryLabel::Positive => positives += 1,
                BinaryLabel::Negative => negatives += 1,
            }
        }
        Cohort {
            examples,
            task,
            by_subject,
            positives,
            negatives,
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        (self.positives, self.negatives)
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.by_subject.keys().map(String::as_str)
    }

    pub fn subject_examples(&self, subject: &str) -> Option<&[usize]> {
        self.by_subject.get(subject).map(Vec::as_slice)
    }

    /// Asserts the inter-individual split: no shared subjects.
    pub fn disjoint_subjects(&self, other: &Cohort) -> bool {
        self.by_subject
            .keys()
            .all(|s| !other.by_subject.contains_key(s))
    }
}

/// Subject-level inclusion rule for training cohorts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum FilterRule {
    /// Keep subjects awake for at least this fraction of scored epochs.
    MinWakeFraction { threshold: f64 },
    /// Keep subjects whose REM to non-REM label ratio is at least this.
    MinRemRatio { threshold: f64 },
    None,
}

impl FilterRule {
    pub fn min_wake_fraction() -> Self {
        FilterRule::MinWakeFraction { threshold: 0.10 }
    }

    pub fn min_rem_ratio() -> Self {
        FilterRule::MinRemRatio { threshold: 0.10 }
    }
}

/// Removes subjects failing the rule, whole-subject at a time. Only training
/// cohorts should pass a rule other than `None`.
pub fn filter_subjects(cohort: Cohort, rule: FilterRule) -> Result<Cohort, CohortError> {
    let keep_subject = |indices: &[usize]| -> bool {
        let pos = indices
            .iter()
            .filter(|&&i| cohort.examples[i].label == BinaryLabel::Positive)
            .count();
        let neg = indices.len() - pos;
        match rule {
            FilterRule::None => true,
            FilterRule::MinWakeFraction { threshold } => {
                pos as f64 / indices.len() as f64 >= threshold
            }
            FilterRule::MinRemRatio { threshold } => {
                neg > 0 && pos as f64 / neg as f64 >= threshold
            }
        }
    };

    let kept: Vec<bool> = {
        let mut kept = vec![false; cohort.examples.len()];
        for indices in cohort.by_subject.values() {
            if keep_subject(indices) {
                for &i in indices {
                    kept[i] = true;
                }
            }
        }
        kept
    };
    let task = cohort.task;
    let examples: Vec<Example> = cohort
        .examples
        .into_iter()
        .zip(kept)
        .filter_map(|(ex, keep)| keep.then_some(ex))
        .collect();
    if examples.is_empty() {
        return Err(CohortError::Empty);
    }
    Ok(Cohort::from_examples(examples, task))
}

/// Class statistics; the per-subject positive percentage is the covariate
/// `w` of the per-subject regressions.
#[derive(Debug, Clone, Serialize)]
pub struct ClassStats {
    pub positives: usize,
    pub negatives: usize,
    /// Positive fraction, rounded to 3 decimals.
    pub positive_fraction: f64,
    /// Percent positive per subject, `w`, keyed by subject id.
    pub per_subject_positive_pct: BTreeMap<String, f64>,
}

pub fn class_stats(cohort: &Cohort) -> ClassStats {
    let (positives, negatives) = cohort.class_counts();
    let total = positives + negatives;
    let fraction = if total == 0 {
        0.0
    } else {
        positives as f64 / total as f64
    };
    let mut per_subject = BTreeMap::new();
    for (subject, indices) in &cohort.by_subject {
        let pos = indices
            .iter()
            .filter(|&&i| cohort.examples[i].label == BinaryLabel::Positive)
            .count();
        per_subject.insert(
            subject.clone(),
            100.0 * pos as f64 / indices.len() as f64,
        );
    }
    ClassStats {
        positives,
        negatives,
        positive_fraction: (fraction * 1000.0).round() / 1000.0,
        per_subject_positive_pct: per_subject,
    }
}
