//! Principal component analysis via the covariance eigendecomposition.

use super::MetricsError;
use nalgebra::{DMatrix, DVector};

/// Projection onto the leading principal components.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// `n x k` coordinates in component space.
    pub coords: Vec<Vec<f64>>,
    /// Fraction of total variance captured by each of the `k` components.
    pub explained_variance: Vec<f64>,
}

/// Mean-centers the rows and projects onto the top `k` right singular
/// directions. Component signs follow a deterministic convention: the
/// largest-magnitude loading of each component is positive.
pub fn pca_project(data: &[Vec<f64>], k: usize) -> Result<PcaProjection, MetricsError> {
    let n = data.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let d = data[0].len();
    if data.iter().any(|row| row.len() != d) {
        return Err(MetricsError::Domain("ragged input rows".into()));
    }
    if k > d {
        return Err(MetricsError::Domain(format!(
            "cannot extract {k} components from {d}-dimensional data"
        )));
    }
    if n <= k {
        return Err(MetricsError::Domain(format!(
            "need more than {k} rows, got {n}"
        )));
    }

    let mut mean = vec![0.0; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // Covariance (biased, 1/n) of the centered rows.
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in data {
        let centered = DVector::from_iterator(d, row.iter().zip(&mean).map(|(v, m)| v - m));
        cov.ger(1.0 / n as f64, &centered, &centered, 1.0);
    }

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    let total: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    let mut components = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let dominant = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if v[dominant] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        components.push(v);
        explained.push(if total > 0.0 {
            eig.eigenvalues[idx].max(0.0) / total
        } else {
            0.0
        });
    }

    let coords = data
        .iter()
        .map(|row| {
            components
                .iter()
                .map(|comp| {
                    row.iter()
                        .zip(&mean)
                        .zip(comp)
                        .map(|((v, m), c)| (v - m) * c)
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        coords,
        explained_variance: explained,
    })
}
