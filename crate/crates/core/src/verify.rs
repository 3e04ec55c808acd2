//! One-class Gaussian user models, per-user thresholds and accept/reject
//! decisions.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Ridge strength relative to the mean per-dimension variance.
    pub reg: f64,
    /// Quantile of training distances used as the base threshold.
    pub quantile: f64,
    pub slack: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { reg: 0.01, quantile: 1.0, slack: 1.5 }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(Error::Config(format!("reg must be >= 0, got {}", self.reg)));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::Config(format!("quantile must lie in (0, 1], got {}", self.quantile)));
        }
        if !(self.slack > 0.0 && self.slack.is_finite()) {
            return Err(Error::Config(format!("slack must be > 0, got {}", self.slack)));
        }
        Ok(())
    }
}

/// The regularized covariance in a form that supports cheap solves.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceFactor {
    /// Lower Cholesky factor of the full `D × D` matrix.
    Dense { lower: DMatrix<f64> },
    /// `Σ = Q·diag(s)·Qᵀ + ridge·I` with orthonormal `Q` (`D × p`) spanning
    /// the centered training data. Used when `D` exceeds the sample count.
    LowRank { basis: DMatrix<f64>, spectrum: Vec<f64>, ridge: f64 },
}

impl CovarianceFactor {
    /// Smallest diagonal entry of the triangular factor (or its equivalent
    /// `sqrt` of the smallest eigenvalue for the low-rank form).
    pub fn min_diagonal(&self) -> f64 {
        match self {
            CovarianceFactor::Dense { lower } => lower.diagonal().min(),
            CovarianceFactor::LowRank { ridge, spectrum, basis } => {
                let smallest = if basis.ncols() < basis.nrows() {
                    *ridge
                } else {
                    spectrum.iter().fold(f64::INFINITY, |m, s| m.min(s + ridge))
                };
                smallest.sqrt()
            }
        }
    }

    /// `xᵀ Σ⁻¹ x`.
    fn quadratic(&self, x: &DVector<f64>) -> f64 {
        match self {
            CovarianceFactor::Dense { lower } => {
                let y = lower.solve_lower_triangular(x).expect("factor diagonal is positive");
                y.norm_squared()
            }
            CovarianceFactor::LowRank { basis, spectrum, ridge } => {
                let proj = basis.tr_mul(x);
                let outside = (x.norm_squared() - proj.norm_squared()).max(0.0);
                let inside: f64 = proj.iter().zip(spectrum).map(|(c, s)| c * c / (s + ridge)).sum();
                outside / ridge + inside
            }
        }
    }

    /// Reassembles `Σ` (tests and diagnostics only; `D × D`).
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            CovarianceFactor::Dense { lower } => lower * lower.transpose(),
            CovarianceFactor::LowRank { basis, spectrum, ridge } => {
                let d = basis.nrows();
                let scaled = basis * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum));
                scaled * basis.transpose() + DMatrix::identity(d, d) * *ridge
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserModel {
    pub user_id: String,
    pub mean: DVector<f64>,
    pub covariance: CovarianceFactor,
    pub reg: f64,
    pub threshold: Option<f64>,
    pub train_count: usize,
}

impl UserModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub accepted: bool,
    pub distance: f64,
    pub threshold: f64,
    pub margin: f64,
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Eigenvalues below this fraction of the largest count as zero scatter.
const RANK_TOL: f64 = 1e-12;

/// Row-stacked vectors after checking dimensions and finiteness.
fn stack<V: AsRef<[f64]>>(vectors: &[V]) -> Result<DMatrix<f64>> {
    let d = vectors[0].as_ref().len();
    for v in vectors {
        if v.as_ref().len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: v.as_ref().len() });
        }
    }
    if d == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    let data = DMatrix::from_fn(vectors.len(), d, |i, j| vectors[i].as_ref()[j]);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("enrollment vectors"));
    }
    Ok(data)
}

/// Centers the rows in place and returns their mean.
fn center(data: &mut DMatrix<f64>) -> DVector<f64> {
    let n = data.nrows() as f64;
    let mean = DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / n));
    for mut row in data.row_iter_mut() {
        row -= mean.transpose();
    }
    mean
}

/// `reg · trace(S)/D`, or `reg` for zero scatter.
fn ridge_of(centered: &DMatrix<f64>, reg: f64) -> f64 {
    let (n, d) = centered.shape();
    let trace = centered.norm_squared() / n.saturating_sub(1).max(1) as f64;
    if trace > 0.0 {
        reg * trace / d as f64
    } else {
        reg
    }
}

/// Factors `S + ridge·I` for centered rows; a single row gives `ridge·I`.
fn factor(centered: &DMatrix<f64>, ridge: f64) -> Result<CovarianceFactor> {
    let (n, d) = centered.shape();
    let denom = n.saturating_sub(1).max(1) as f64;
    let covariance = if d <= n {
        let mut cov = centered.tr_mul(centered) / denom;
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        let chol = Cholesky::<f64, Dyn>::new(cov)
            .ok_or_else(|| Error::NumericalFailure("regularized covariance is not positive definite".into()))?;
        CovarianceFactor::Dense { lower: chol.l() }
    } else {
        if ridge <= 0.0 {
            return Err(Error::NumericalFailure(format!("covariance of dimension {d} from {n} samples needs reg > 0")));
        }
        // eigenvectors of the n × n Gram matrix map to the data span
        let gram = centered * centered.transpose() / denom;
        let eig = nalgebra::SymmetricEigen::new(gram);
        let top = eig.eigenvalues.max();
        let mut keep: Vec<usize> = (0..n).filter(|&i| top > 0.0 && eig.eigenvalues[i] > top * RANK_TOL).collect();
        keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut basis = DMatrix::zeros(d, keep.len());
        let mut spectrum = Vec::with_capacity(keep.len());
        for (col, &i) in keep.iter().enumerate() {
            let lambda = eig.eigenvalues[i];
            let mut q = centered.tr_mul(&eig.eigenvectors.column(i));
            q /= (lambda * denom).sqrt();
            basis.set_column(col, &q);
            spectrum.push(lambda);
        }
        CovarianceFactor::LowRank { basis, spectrum, ridge }
    };
    if !(covariance.min_diagonal() > 0.0) {
        return Err(Error::NumericalFailure("covariance factor has a non-positive diagonal".into()));
    }
    Ok(covariance)
}

/// Sample mean and ridge-regularized sample covariance (`1/(n−1)`) of the
/// enrollment vectors. The ridge is `reg · trace(S)/D`, or `reg` when the
/// scatter is zero.
pub fn fit_user_model<V: AsRef<[f64]>>(user_id: &str, vectors: &[V], reg: f64) -> Result<UserModel> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::Config(format!("reg must be >= 0, got {reg}")));
    }
    let mut centered = stack(vectors)?;
    let mean = center(&mut centered);
    let covariance = factor(&centered, ridge_of(&centered, reg))?;
    Ok(UserModel { user_id: user_id.to_string(), mean, covariance, reg, threshold: None, train_count: n })
}

/// Squared Mahalanobis distance to the model mean.
pub fn score(model: &UserModel, v: &[f64]) -> Result<f64> {
    if v.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: v.len() });
    }
    let diff = DVector::from_column_slice(v) - &model.mean;
    Ok(model.covariance.quadratic(&diff).max(0.0))
}

/// Empirical quantile with the "higher" rule: the smallest order statistic
/// at or above position `q·(n−1)`.
pub fn quantile_higher(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    sorted[(pos.ceil() as usize).min(sorted.len() - 1)]
}

/// Distance of each training vector as the model would see an unseen
/// genuine signature: the larger of its in-sample distance and its distance
/// to the model refitted without it (same ridge). With fewer samples than
/// dimensions the in-sample distances are fixed by `n` alone and say nothing
/// about spread, so the held-out ones carry the scale.
pub fn training_distances<V: AsRef<[f64]>>(model: &UserModel, train: &[V]) -> Result<Vec<f64>> {
    let mut out = train.iter().map(|v| score(model, v.as_ref())).collect::<Result<Vec<_>>>()?;
    if train.len() < 2 {
        return Ok(out);
    }
    let data = stack(train)?;
    let mut centered = data.clone();
    center(&mut centered);
    let ridge = ridge_of(&centered, model.reg);
    for (i, dist) in out.iter_mut().enumerate() {
        let mut rest = data.clone().remove_row(i);
        let mean = center(&mut rest);
        let held = data.row(i).transpose() - mean;
        *dist = dist.max(factor(&rest, ridge)?.quadratic(&held).max(0.0));
    }
    Ok(out)
}

/// Sets the threshold to `slack ×` the `quantile` of the training distances
/// from [`training_distances`]. Every training vector within that quantile is
/// accepted.
pub fn calibrate_threshold<V: AsRef<[f64]>>(
    mut model: UserModel,
    train: &[V],
    quantile: f64,
    slack: f64,
) -> Result<UserModel> {
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if !(quantile > 0.0 && quantile <= 1.0) || !(slack > 0.0 && slack.is_finite()) {
        return Err(Error::Config(format!("quantile must lie in (0, 1] and slack be > 0, got {quantile} and {slack}")));
    }
    let mut distances = training_distances(&model, train)?;
    distances.sort_by(f64::total_cmp);
    let threshold = quantile_higher(&distances, quantile) * slack;
    if !threshold.is_finite() {
        return Err(Error::NonFinite("threshold"));
    }
    model.threshold = Some(threshold);
    Ok(model)
}

/// Fit and calibrate on the same enrollment set.
pub fn enroll<V: AsRef<[f64]>>(user_id: &str, vectors: &[V], cfg: &VerifyConfig) -> Result<UserModel> {
    cfg.validate()?;
    let model = fit_user_model(user_id, vectors, cfg.reg)?;
    calibrate_threshold(model, vectors, cfg.quantile, cfg.slack)
}

pub fn verify(model: &UserModel, v: &[f64]) -> Result<Decision> {
    let threshold = model.threshold.ok_or(Error::ThresholdUnset)?;
    let distance = score(model, v)?;
    Ok(Decision { accepted: distance <= threshold, distance, threshold, margin: distance - threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::stream;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = stream(seed, "verify-test", "");
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    /// Covariance + ridge assembled directly, then inverted explicitly.
    fn explicit_distance(train: &[Vec<f64>], reg: f64, v: &[f64]) -> f64 {
        let (n, d) = (train.len(), train[0].len());
        let mean: Vec<f64> = (0..d).map(|j| train.iter().map(|t| t[j]).sum::<f64>() / n as f64).collect();
        let mut cov = DMatrix::zeros(d, d);
        for t in train {
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += (t[a] - mean[a]) * (t[b] - mean[b]) / (n - 1) as f64;
                }
            }
        }
        let trace = cov.trace();
        let ridge = if trace > 0.0 { reg * trace / d as f64 } else { reg };
        cov += DMatrix::identity(d, d) * ridge;
        let inv = cov.try_inverse().unwrap();
        let diff = DVector::from_iterator(d, v.iter().zip(&mean).map(|(a, b)| a - b));
        (diff.transpose() * inv * diff)[0]
    }

    #[test]
    fn identical_vectors_give_pure_ridge() {
        let v = vec![1.0, -2.0, 0.5];
        let model = fit_user_model("u", &[v.clone(), v.clone()], 0.3).unwrap();
        assert!((model.covariance.to_dense() - DMatrix::identity(3, 3) * 0.3).amax() < 1e-15);
        assert_eq!(score(&model, &v).unwrap(), 0.0);
        // same in the low-rank regime
        let wide = vec![0.25; 10];
        let model = fit_user_model("u", &[wide.clone(), wide.clone(), wide.clone()], 0.3).unwrap();
        assert!(matches!(model.covariance, CovarianceFactor::LowRank { .. }));
        assert_eq!(score(&model, &wide).unwrap(), 0.0);
        let mut off = wide.clone();
        off[3] += 0.6;
        assert!((score(&model, &off).unwrap() - 0.36 / 0.3).abs() < 1e-14);
    }

    #[test]
    fn recovers_known_gaussian() {
        // x = L z + mu
        let l = DMatrix::from_row_slice(4, 4, &[2.0, 0.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, -0.3, 0.2, 1.5, 0.0, 0.1, -0.4, 0.3, 0.7]);
        let mu = DVector::from_column_slice(&[1.0, -2.0, 3.0, 0.5]);
        let data: Vec<Vec<f64>> = gaussian(10_000, 4, 3)
            .into_iter()
            .map(|z| (&l * DVector::from_vec(z) + &mu).as_slice().to_vec())
            .collect();
        let model = fit_user_model("u", &data, 1e-9).unwrap();
        let truth = &l * l.transpose();
        let cov = model.covariance.to_dense();
        assert!((cov.clone() - &truth).norm() < 0.05 * truth.norm());
        for i in 0..4 {
            assert!((cov[(i, i)] - truth[(i, i)]).abs() < 0.05 * truth[(i, i)]);
        }
        assert!((&model.mean - &mu).norm() < 0.05 * mu.norm());
    }

    #[test]
    fn unit_ridge_on_identity_scatter_doubles_covariance() {
        // ±e_i rows scaled so the sample covariance is exactly I
        let d = 5;
        let s = ((2 * d - 1) as f64 / 2.0).sqrt();
        let mut rows = Vec::new();
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[i] = sign * s;
                rows.push(v);
            }
        }
        let model = fit_user_model("u", &rows, 1.0).unwrap();
        assert!((model.covariance.to_dense() - DMatrix::identity(d, d) * 2.0).amax() < 1e-12);
        let v = vec![1.0, 2.0, 0.0, -1.0, 0.5];
        assert!((score(&model, &v).unwrap() - explicit_distance(&rows, 1.0, &v)).abs() < 1e-12);
    }

    #[test]
    fn identity_covariance_scores_squared_euclidean() {
        let mean = DVector::from_column_slice(&[0.5, 1.0, -1.0]);
        let model = UserModel {
            user_id: "u".into(),
            mean,
            covariance: CovarianceFactor::Dense { lower: DMatrix::identity(3, 3) },
            reg: 0.0,
            threshold: None,
            train_count: 2,
        };
        assert_eq!(score(&model, &[1.5, 3.0, -1.0]).unwrap(), 5.0);
        assert_eq!(score(&model, &[0.5, 1.0, -1.0]).unwrap(), 0.0);
        assert!(matches!(score(&model, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matches_explicit_inverse_in_both_regimes() {
        for (n, d) in [(30, 6), (5, 40), (8, 8), (3, 3)] {
            let train = gaussian(n, d, n as u64 * 31 + d as u64);
            let model = fit_user_model("u", &train, 0.05).unwrap();
            assert!(model.covariance.min_diagonal() > 0.0);
            for v in gaussian(4, d, 99) {
                let want = explicit_distance(&train, 0.05, &v);
                let got = score(&model, &v).unwrap();
                assert!((got - want).abs() < 1e-8 * want.max(1.0), "n{n} d{d}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn orthogonal_change_of_basis_preserves_distance() {
        for (n, d) in [(20, 6), (4, 12)] {
            let train = gaussian(n, d, 5);
            let q = DMatrix::from_fn(d, d, |i, j| gaussian(1, 1, (i * d + j) as u64 + 1000)[0][0]).qr().q();
            let rotate = |v: &Vec<f64>| (&q * DVector::from_column_slice(v)).as_slice().to_vec();
            let rotated: Vec<Vec<f64>> = train.iter().map(rotate).collect();
            let a = fit_user_model("u", &train, 0.1).unwrap();
            let b = fit_user_model("u", &rotated, 0.1).unwrap();
            for v in gaussian(5, d, 6) {
                let (x, y) = (score(&a, &v).unwrap(), score(&b, &rotate(&v)).unwrap());
                assert!((x - y).abs() < 1e-8 * x.max(1.0));
            }
        }
    }

    #[test]
    fn rank_deficient_input_stays_positive_definite() {
        // every vector on one line in 200 dimensions
        let dir: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let train: Vec<Vec<f64>> = (0..5).map(|k| dir.iter().map(|v| v * k as f64).collect()).collect();
        let model = fit_user_model("u", &train, 1e-3).unwrap();
        assert!(model.covariance.min_diagonal() > 0.0);
        let CovarianceFactor::LowRank { spectrum, .. } = &model.covariance else { panic!() };
        assert_eq!(spectrum.len(), 1);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_user_model("u", &[vec![1.0]], 0.1), Err(Error::TooFewSamples { needed: 2, got: 1 })));
        assert!(matches!(fit_user_model("u", &[vec![1.0], vec![1.0, 2.0]], 0.1), Err(Error::DimensionMismatch { .. })));
        assert!(fit_user_model("u", &gaussian(3, 9, 1), 0.0).is_err());
    }

    #[test]
    fn calibration_rules() {
        let train = gaussian(12, 4, 8);
        let model = fit_user_model("u", &train, 0.01).unwrap();
        let max = training_distances(&model, &train).unwrap().into_iter().fold(0.0, f64::max);
        let m = calibrate_threshold(model.clone(), &train, 1.0, 1.0).unwrap();
        assert_eq!(m.threshold, Some(max));
        assert!(train.iter().all(|v| verify(&m, v).unwrap().accepted));

        let at_mean = vec![model.mean.as_slice().to_vec()];
        let m = calibrate_threshold(model.clone(), &at_mean, 1.0, 1.5).unwrap();
        assert_eq!(m.threshold, Some(0.0));
        assert!(verify(&m, model.mean.as_slice()).unwrap().accepted);
        assert!(!verify(&m, &train[0]).unwrap().accepted);

        assert!(matches!(calibrate_threshold(model.clone(), &Vec::<Vec<f64>>::new(), 1.0, 1.5), Err(Error::EmptyTraining)));
        assert!(matches!(verify(&model, &train[0]), Err(Error::ThresholdUnset)));
        assert_eq!(quantile_higher(&[1.0, 2.0, 3.0, 4.0], 0.5), 3.0);
        assert_eq!(quantile_higher(&[1.0, 2.0, 3.0, 4.0], 1.0 / 3.0), 2.0);
    }

    /// Held-out distances through an explicit inverse of the refitted
    /// covariance plus the full-set ridge.
    fn held_out_oracle(train: &[Vec<f64>], reg: f64) -> Vec<f64> {
        let (n, d) = (train.len(), train[0].len());
        let mean_of = |rows: &[&Vec<f64>]| DVector::from_fn(d, |j, _| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64);
        let all: Vec<&Vec<f64>> = train.iter().collect();
        let mu = mean_of(&all);
        let trace: f64 = train.iter().map(|r| (DVector::from_column_slice(r) - &mu).norm_squared()).sum::<f64>() / (n - 1) as f64;
        let ridge = reg * trace / d as f64;
        (0..n)
            .map(|i| {
                let rest: Vec<&Vec<f64>> = all.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, r)| *r).collect();
                let m = mean_of(&rest);
                let mut cov = DMatrix::identity(d, d) * ridge;
                for r in &rest {
                    let c = DVector::from_column_slice(r) - &m;
                    cov += &c * c.transpose() / (rest.len().max(2) - 1) as f64;
                }
                let x = DVector::from_column_slice(&train[i]) - &m;
                (x.transpose() * cov.try_inverse().unwrap() * &x)[0]
            })
            .collect()
    }

    #[test]
    fn training_distances_use_held_out_fits() {
        for (n, d, seed) in [(2, 5, 1), (3, 7, 2), (6, 4, 3), (12, 4, 4), (5, 30, 5)] {
            let train: Vec<Vec<f64>> = gaussian(n, d, seed).into_iter().map(|v| v.iter().map(|x| 3.0 * x + 1.0).collect()).collect();
            let model = fit_user_model("u", &train, 0.05).unwrap();
            let got = training_distances(&model, &train).unwrap();
            let oracle = held_out_oracle(&train, 0.05);
            for (i, v) in train.iter().enumerate() {
                let inside = score(&model, v).unwrap();
                let want = inside.max(oracle[i]);
                assert!((got[i] - want).abs() <= 1e-8 * want.max(1.0), "n={n} d={d}: {} vs {want}", got[i]);
            }
        }
        // two samples: the held-out distance is ‖x₁−x₂‖² over the ridge
        // reg·‖x₁−x₂‖²/(2D), i.e. 2D/reg whatever the spread
        for scale in [1e-3, 1.0, 1e3] {
            let train = vec![vec![0.0; 10], (0..10).map(|j| scale * (j as f64 - 4.0)).collect()];
            let model = fit_user_model("u", &train, 0.01).unwrap();
            for v in training_distances(&model, &train).unwrap() {
                assert!((v - 2000.0).abs() < 1e-8, "{v}");
            }
        }
    }

    #[test]
    fn boundary_distance_is_accepted() {
        let train = gaussian(6, 3, 2);
        let mut model = fit_user_model("u", &train, 0.1).unwrap();
        let d = score(&model, &train[2]).unwrap();
        model.threshold = Some(d);
        let dec = verify(&model, &train[2]).unwrap();
        assert!(dec.accepted);
        assert_eq!(dec.margin, 0.0);
        model.threshold = Some(d.next_down());
        assert!(!verify(&model, &train[2]).unwrap().accepted);
    }

    proptest! {
        #[test]
        fn acceptance_is_monotone_in_distance(seed in any::<u64>(), scale in 0.0f64..3.0) {
            let train = gaussian(7, 5, seed);
            let model = enroll("u", &train, &VerifyConfig::default()).unwrap();
            let mut rng = stream(seed, "probe", "");
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = v.iter().zip(model.mean.iter()).map(|(a, m)| m + (a - m) * scale).collect();
            let (dv, dw) = (verify(&model, &v).unwrap(), verify(&model, &w).unwrap());
            prop_assert_eq!(dv.accepted, dv.distance <= dv.threshold);
            if dv.accepted && dw.distance < dv.distance {
                prop_assert!(dw.accepted);
            }
        }
    }
}
