use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PatchSet;
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteningMode {
    Pca,
    Zca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiteningConfig {
    pub epsilon: f64,
    pub variance_to_keep: f64,
    pub mode: WhiteningMode,
}

impl Default for WhiteningConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, variance_to_keep: 0.99, mode: WhiteningMode::Pca }
    }
}

/// `z = basis · (x − mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mean: DVector<f64>,
    /// `k × d` (PCA) or `d × d` (ZCA).
    pub basis: DMatrix<f64>,
    pub epsilon: f64,
    pub mode: WhiteningMode,
    /// Output dimension.
    pub retained_k: usize,
    /// Fraction of total variance carried by the retained components.
    pub variance_kept: f64,
}

impl WhiteningTransform {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Whitens every row of `data` (`m × d` in, `m × k` out).
    pub fn transform_rows(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: data.ncols() });
        }
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.basis.transpose())
    }
}

/// Relative cut-off below which an eigenvalue counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Fits PCA (or ZCA) whitening on mean-removed patches. The covariance uses
/// the population normalization `1/m`.
pub fn fit_whitening(patches: &PatchSet, config: &WhiteningConfig, exec: Exec) -> Result<WhiteningTransform> {
    if !patches.mean_removed {
        return Err(Error::Config("whitening expects DC-removed patches".into()));
    }
    if !(config.variance_to_keep > 0.0 && config.variance_to_keep <= 1.0) || !(config.epsilon >= 0.0) {
        return Err(Error::Config(format!(
            "whitening needs variance_to_keep in (0, 1] and epsilon >= 0, got {} and {}",
            config.variance_to_keep, config.epsilon
        )));
    }
    let (m, d) = patches.data.shape();
    if m < d {
        log::warn!("fitting whitening on {m} patches of dimension {d}; covariance is rank-deficient");
    }
    let data = &patches.data;
    let mean = DVector::from_iterator(d, data.column_iter().map(|c| c.sum() / m as f64));

    let partials = exec.map_chunks(m, |range| {
        let mut block = data.rows(range.start, range.len()).clone_owned();
        for mut row in block.row_iter_mut() {
            row -= mean.transpose();
        }
        block.transpose() * &block
    });
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in &partials {
        cov += p;
    }
    cov /= m as f64;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite patch covariance".into()));
    }

    let eig = nalgebra::SymmetricEigen::try_new(cov, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericalFailure("eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let values: Vec<f64> = order
        .iter()
        .map(|&i| {
            let v = eig.eigenvalues[i];
            if v > top * RANK_TOL {
                v
            } else {
                0.0
            }
        })
        .collect();
    let rank = values.iter().take_while(|&&v| v > 0.0).count();
    if rank == 0 {
        return Err(Error::NumericalFailure("patch covariance is zero".into()));
    }
    let total: f64 = values.iter().sum();
    let mut kept = 0.0;
    let mut k = 0;
    while k < rank {
        kept += values[k];
        k += 1;
        if kept >= config.variance_to_keep * total * (1.0 - 1e-12) {
            break;
        }
    }

    let mut pca = DMatrix::<f64>::zeros(k, d);
    for (row, &i) in order.iter().take(k).enumerate() {
        let scale = 1.0 / (values[row] + config.epsilon).sqrt();
        for c in 0..d {
            pca[(row, c)] = eig.eigenvectors[(c, i)] * scale;
        }
    }
    let (basis, retained_k) = match config.mode {
        WhiteningMode::Pca => (pca, k),
        WhiteningMode::Zca => {
            let mut u = DMatrix::<f64>::zeros(d, k);
            for (col, &i) in order.iter().take(k).enumerate() {
                u.set_column(col, &eig.eigenvectors.column(i));
            }
            (u * pca, d)
        }
    };
    Ok(WhiteningTransform {
        mean,
        basis,
        epsilon: config.epsilon,
        mode: config.mode,
        retained_k,
        variance_kept: kept / total,
    })
}

/// Whitens a single patch.
pub fn apply_whitening(tf: &WhiteningTransform, patch: &[f64]) -> Result<DVector<f64>> {
    if patch.len() != tf.input_dim() {
        return Err(Error::DimensionMismatch { expected: tf.input_dim(), found: patch.len() });
    }
    let centered = DVector::from_column_slice(patch) - &tf.mean;
    Ok(&tf.basis * centered)
}
