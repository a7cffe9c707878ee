//! Evaluation statistics: confusion-matrix summaries, ROC/AUC via the
//! Mann-Whitney identity, one-sided rank-sum tests, slope-significance
//! regression, PCA projection, and per-subject reports.
//!
//! Metrics with zero denominators are reported as explicitly undefined
//! (`None`), never silently zero; a per-subject report on an all-sleep
//! subject would otherwise lie.

mod pca;

pub use pca::{pca_project, PcaProjection};

use crate::cohort::BinaryLabel;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use std::collections::BTreeMap;
use thiserror::Error;

/// Smallest p-value reported; `-log p` matrices are capped here.
pub const MIN_P: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("predictions and labels differ in length ({predictions} vs {labels})")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("input is empty")]
    Empty,
    #[error("need both classes present (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Exact counts; positive = wake (or REM for the appendix task).
pub fn confusion(
    predictions: &[BinaryLabel],
    labels: &[BinaryLabel],
) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        use BinaryLabel::*;
        match (p, l) {
            (Positive, Positive) => cm.tp += 1,
            (Positive, Negative) => cm.fp += 1,
            (Negative, Negative) => cm.tn += 1,
            (Negative, Positive) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Ratio metrics; any with a zero denominator is `None`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Summary {
    /// Sensitivity (recall), `tp / (tp + fn)`.
    pub se: Option<f64>,
    /// Specificity, `tn / (tn + fp)`.
    pub sp: Option<f64>,
    /// Accuracy.
    pub acc: f64,
    /// Precision (PPV), `tp / (tp + fp)`.
    pub pr: Option<f64>,
    /// Harmonic mean of sensitivity and precision.
    pub f1: Option<f64>,
    /// Cohen's kappa, `(p_o - p_e) / (1 - p_e)`.
    pub kappa: Option<f64>,
}

pub fn summary(cm: &ConfusionMatrix) -> Result<Summary, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Domain("empty confusion matrix".into()));
    }
    let n = total as f64;
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);

    let se = ratio(cm.tp, cm.tp + cm.fn_);
    let sp = ratio(cm.tn, cm.tn + cm.fp);
    let pr = ratio(cm.tp, cm.tp + cm.fp);
    let acc = (cm.tp + cm.tn) as f64 / n;
    let f1 = match (se, pr) {
        (Some(s), Some(p)) if s + p > 0.0 => Some(2.0 * s * p / (s + p)),
        (Some(_), Some(_)) => Some(0.0), // tp = 0 with both denominators nonzero
        _ => None,
    };

    let p_o = acc;
    let pred_pos = (cm.tp + cm.fp) as f64 / n;
    let label_pos = (cm.tp + cm.fn_) as f64 / n;
    let p_e = pred_pos * label_pos + (1.0 - pred_pos) * (1.0 - label_pos);
    let kappa = if (1.0 - p_e).abs() < 1e-15 {
        None
    } else {
        Some((p_o - p_e) / (1.0 - p_e))
    };

    Ok(Summary {
        se,
        sp,
        acc,
        pr,
        f1,
        kappa,
    })
}

/// ROC curve as a threshold sweep over distinct scores, with the trapezoidal
/// area. Ties get half credit, so the area equals the Mann-Whitney
/// probability `P(score_pos > score_neg) + 0.5 P(tie)` exactly.
#[derive(Debug, Clone)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

pub fn roc_auc(scores: &[f64], labels: &[BinaryLabel]) -> Result<RocCurve, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: scores.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l == BinaryLabel::Positive).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass {
            positives: pos,
            negatives: neg,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));

    let mut points = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        // Consume a tie group of equal scores at once.
        let score = scores[order[i]];
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == score {
            match labels[order[i]] {
                BinaryLabel::Positive => dtp += 1,
                BinaryLabel::Negative => dfp += 1,
            }
            i += 1;
        }
        let (tp0, fp0) = (tp, fp);
        tp += dtp;
        fp += dfp;
        let x0 = fp0 as f64 / neg as f64;
        let x1 = fp as f64 / neg as f64;
        let y0 = tp0 as f64 / pos as f64;
        let y1 = tp as f64 / pos as f64;
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

/// One-sided Wilcoxon rank-sum (Mann-Whitney U) result for the alternative
/// "A is sampled from a distribution with larger median than B".
#[derive(Debug, Clone, Copy)]
pub struct RankSumResult {
    pub p_value: f64,
    /// `-ln p`, capped at `-ln(MIN_P)`.
    pub neg_log_p: f64,
    pub u_statistic: f64,
    /// Whether the exact permutation distribution was enumerated.
    pub exact: bool,
}

/// Sample-size bound under which the exact permutation p-value is computed.
pub const RANK_SUM_EXACT_LIMIT: usize = 12;

pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSumResult, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = a.len() + b.len();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&mut pooled, a, b);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - (a.len() * (a.len() + 1)) as f64 / 2.0;

    let (p, exact) = if n <= RANK_SUM_EXACT_LIMIT {
        (exact_p(&ranks, a.len(), u), true)
    } else {
        (normal_approx_p(&ranks, a.len(), b.len(), u), false)
    };
    let p = p.clamp(MIN_P, 1.0);
    Ok(RankSumResult {
        p_value: p,
        neg_log_p: -p.ln(),
        u_statistic: u,
        exact,
    })
}

/// Midranks of `a ++ b` in the pooled ordering.
fn midranks(pooled: &mut [f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = mid;
        }
        i = j;
    }
    debug_assert_eq!(a.len() + b.len(), n);
    ranks
}

/// Permutation-exact p: the fraction of equally likely rank assignments to
/// group A whose U statistic is at least the observed one.
fn exact_p(ranks: &[f64], na: usize, u_obs: f64) -> f64 {
    let n = ranks.len();
    let mut at_least = 0u64;
    let mut total = 0u64;
    let mut subset: Vec<usize> = (0..na).collect();
    loop {
        let rank_sum: f64 = subset.iter().map(|&i| ranks[i]).sum();
        let u = rank_sum - (na * (na + 1)) as f64 / 2.0;
        if u >= u_obs - 1e-9 {
            at_least += 1;
        }
        total += 1;
        // Advance the combination (lexicographic).
        let mut i = na;
        loop {
            if i == 0 {
                return at_least as f64 / total as f64;
            }
            i -= 1;
            if subset[i] != i + n - na {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..na {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

/// Normal approximation with tie correction and continuity correction.
fn normal_approx_p(ranks: &[f64], na: usize, nb: usize, u: f64) -> f64 {
    let n = (na + nb) as f64;
    let mean = na as f64 * nb as f64 / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = (na as f64 * nb as f64 / 12.0) * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 0.5; // all observations tied: no evidence either way
    }
    let z = (u - mean - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    1.0 - normal.cdf(z)
}

/// Ordinary least squares with a two-sided t-test on the slope.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_p_value: f64,
    pub n: usize,
}

pub fn slope_regression(x: &[f64], y: &[f64]) -> Result<RegressionFit, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: x.len(),
            labels: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(MetricsError::Domain(format!(
            "need at least 3 points for a slope p-value, got {n}"
        )));
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::Domain("x is constant".into()));
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (xi - mean_x) * (yi - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - (intercept + slope * xi);
            r * r
        })
        .sum();
    let dof = (n - 2) as f64;
    let sigma2 = rss / dof;
    let se = (sigma2 / sxx).sqrt();
    let p = if se == 0.0 {
        MIN_P // exact fit: the slope is infinitely significant
    } else {
        let t = slope / se;
        let dist = StudentsT::new(0.0, 1.0, dof).expect("valid dof");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(MIN_P, 1.0)
    };
    Ok(RegressionFit {
        slope,
        intercept,
        slope_p_value: p,
        n,
    })
}

/// One scored, labeled prediction attributed to a subject.
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub subject_id: String,
    pub label: BinaryLabel,
    /// Positive-class (wake) probability.
    pub score: f64,
    pub prediction: BinaryLabel,
}

/// Per-subject metric suite plus covariates for the regressions.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub cm: ConfusionMatrix,
    pub summary: Summary,
    /// `None` when the subject has a single class.
    pub auc: Option<f64>,
    /// Percent of positive labels, the covariate `w`.
    pub positive_pct: f64,
    pub ahi: Option<f64>,
    pub n: usize,
}

/// Applies the full metric suite to each subject individually.
pub fn per_subject_report(
    records: &[PredictionRecord],
    ahi: &BTreeMap<String, f64>,
) -> Result<Vec<SubjectReport>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_subject: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_subject.entry(&r.subject_id).or_default().push(r);
    }
    let mut reports = Vec::with_capacity(by_subject.len());
    for (subject, rs) in by_subject {
        let preds: Vec<BinaryLabel> = rs.iter().map(|r| r.prediction).collect();
        let labels: Vec<BinaryLabel> = rs.iter().map(|r| r.label).collect();
        let scores: Vec<f64> = rs.iter().map(|r| r.score).collect();
        let cm = confusion(&preds, &labels)?;
        let positives = labels
            .iter()
            .filter(|&&l| l == BinaryLabel::Positive)
            .count();
        let auc = roc_auc(&scores, &labels).ok().map(|c| c.auc);
        reports.push(SubjectReport {
            subject_id: subject.to_owned(),
            cm,
            summary: summary(&cm)?,
            auc,
            positive_pct: 100.0 * positives as f64 / labels.len() as f64,
            ahi: ahi.get(subject).copied(),
            n: labels.len(),
        });
    }
    Ok(reports)
}
