//! Sparse autoencoder objective: sigmoid hidden layer, linear output layer.
//!
//! ```text
//! J = (1/m) Σᵢ ‖x̂⁽ⁱ⁾ − x⁽ⁱ⁾‖² + λ (‖W1‖² + ‖W2‖²) + β Σⱼ KL(ρ ‖ ρ̂ⱼ)
//! ρ̂ⱼ = (1/m) Σᵢ aⱼ(x⁽ⁱ⁾)
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{stream, Exec};

/// How the average hidden activation is formed from per-example activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityTarget {
    /// ρ̂ⱼ averages aⱼ.
    #[default]
    Activation,
    /// ρ̂ⱼ averages aⱼ², for comparison with a literal reading of the
    /// superscript in the average-activation formula.
    SquaredActivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub rho: f64,
    pub beta: f64,
    pub lambda: f64,
    /// L-BFGS iteration cap.
    pub iterations: usize,
    pub seed: u64,
    pub history: usize,
    pub sparsity_target: SparsityTarget,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            rho: 0.05,
            beta: 3.0,
            lambda: 3e-3,
            iterations: 700,
            seed: 0,
            history: 20,
            sparsity_target: SparsityTarget::Activation,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.beta >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::Config("beta and lambda must be non-negative".into()));
        }
        if self.iterations == 0 || self.history == 0 {
            return Err(Error::Config("iterations and history must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    /// `h × k`
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// `k × h`
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl AutoencoderParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w1: DMatrix::zeros(hidden, input),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(input, hidden),
            b2: DVector::zeros(input),
        }
    }

    /// Weights uniform in ±√(6 / (k + h + 1)), biases zero.
    pub fn initialize(input: usize, hidden: usize, seed: u64) -> Self {
        let r = (6.0 / (input + hidden + 1) as f64).sqrt();
        let mut rng = stream(seed, "init", "");
        let mut p = Self::zeros(input, hidden);
        for v in p.w1.iter_mut().chain(p.w2.iter_mut()) {
            *v = rng.random_range(-r..r);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.nrows()
    }

    pub fn len(&self) -> usize {
        2 * self.w1.len() + self.b1.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat layout: W1, W2 (both column-major), b1, b2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(self.b1.as_slice());
        v.extend_from_slice(self.b2.as_slice());
        v
    }

    pub fn from_flat(flat: &[f64], input: usize, hidden: usize) -> Result<Self> {
        let n = 2 * input * hidden + input + hidden;
        if flat.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: flat.len() });
        }
        let hk = input * hidden;
        Ok(Self {
            w1: DMatrix::from_column_slice(hidden, input, &flat[..hk]),
            w2: DMatrix::from_column_slice(input, hidden, &flat[hk..2 * hk]),
            b1: DVector::from_column_slice(&flat[2 * hk..2 * hk + hidden]),
            b2: DVector::from_column_slice(&flat[2 * hk + hidden..]),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityStats {
    pub rho_hat: DVector<f64>,
}

/// KL divergence between Bernoulli(ρ) and Bernoulli(ρ̂).
pub fn kl_divergence(rho: f64, rho_hat: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::DomainError(rho));
    }
    if !(rho_hat > 0.0 && rho_hat < 1.0) {
        return Err(Error::DomainError(rho_hat));
    }
    if rho == rho_hat {
        return Ok(0.0);
    }
    Ok(rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln())
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Hidden activations and reconstructions for a block of rows.
fn forward(params: &AutoencoderParams, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = x * params.w1.transpose();
    for mut row in a.row_iter_mut() {
        row += params.b1.transpose();
    }
    a.apply(|z| *z = sigmoid(*z));
    let mut out = &a * params.w2.transpose();
    for mut row in out.row_iter_mut() {
        row += params.b2.transpose();
    }
    (a, out)
}

struct ForwardPartial {
    squared_error: f64,
    activation_sum: DVector<f64>,
}

struct BackwardPartial {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

/// Cost, analytic gradient (flat, [`AutoencoderParams::to_flat`] order) and
/// average activations for a whitened batch (`m × k`, one example per row).
///
/// The batch is processed in fixed-size row chunks whose partial sums are
/// added in chunk order, so the result does not depend on `exec`.
pub fn sparse_cost_grad(
    params: &AutoencoderParams,
    batch: &DMatrix<f64>,
    hyper: &Hyperparams,
    exec: Exec,
) -> Result<(f64, Vec<f64>, SparsityStats)> {
    let (m, k) = batch.shape();
    let h = params.hidden_size();
    if k != params.input_dim() {
        return Err(Error::DimensionMismatch { expected: params.input_dim(), found: k });
    }
    if m == 0 {
        return Err(Error::Config("empty training batch".into()));
    }
    let squared = hyper.sparsity_target == SparsityTarget::SquaredActivation;
    let block = |range: std::ops::Range<usize>| batch.rows(range.start, range.len()).clone_owned();

    let partials = exec.map_chunks(m, |range| {
        let x = block(range);
        let (a, out) = forward(params, &x);
        let squared_error = (&out - &x).norm_squared();
        let activation_sum = if squared {
            DVector::from_iterator(h, a.column_iter().map(|c| c.norm_squared()))
        } else {
            DVector::from_iterator(h, a.column_iter().map(|c| c.sum()))
        };
        ForwardPartial { squared_error, activation_sum }
    });
    let mut squared_error = 0.0;
    let mut activation_sum = DVector::zeros(h);
    for p in &partials {
        squared_error += p.squared_error;
        activation_sum += &p.activation_sum;
    }
    let mf = m as f64;
    let rho_hat = activation_sum / mf;

    let mut cost = squared_error / mf + hyper.lambda * (params.w1.norm_squared() + params.w2.norm_squared());
    // d(β Σ KL)/dρ̂ⱼ, spread over the m examples through ρ̂ⱼ = (1/m) Σ …
    let mut sparsity_delta = DVector::zeros(h);
    if hyper.beta > 0.0 {
        let rho = hyper.rho;
        for (j, &r) in rho_hat.iter().enumerate() {
            cost += hyper.beta * kl_divergence(rho, r).map_err(|_| Error::NonFinite("average activation"))?;
            sparsity_delta[j] = hyper.beta / mf * (-rho / r + (1.0 - rho) / (1.0 - r));
        }
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("autoencoder cost"));
    }

    let partials = exec.map_chunks(m, |range| {
        let x = block(range);
        let (a, out) = forward(params, &x);
        let d_out = (out - &x) * (2.0 / mf);
        let w2 = d_out.transpose() * &a;
        let b2 = DVector::from_iterator(k, d_out.column_iter().map(|c| c.sum()));
        let mut d_hidden = &d_out * &params.w2;
        for ((mut col, a_col), s) in d_hidden.column_iter_mut().zip(a.column_iter()).zip(sparsity_delta.iter()) {
            for (g, &act) in col.iter_mut().zip(a_col.iter()) {
                let through_rho = if squared { 2.0 * act * s } else { *s };
                *g = (*g + through_rho) * act * (1.0 - act);
            }
        }
        let w1 = d_hidden.transpose() * &x;
        let b1 = DVector::from_iterator(h, d_hidden.column_iter().map(|c| c.sum()));
        BackwardPartial { w1, b1, w2, b2 }
    });
    let mut grad = AutoencoderParams::zeros(k, h);
    for p in &partials {
        grad.w1 += &p.w1;
        grad.b1 += &p.b1;
        grad.w2 += &p.w2;
        grad.b2 += &p.b2;
    }
    grad.w1 += &params.w1 * (2.0 * hyper.lambda);
    grad.w2 += &params.w2 * (2.0 * hyper.lambda);
    Ok((cost, grad.to_flat(), SparsityStats { rho_hat }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurelearn::gradcheck::{check_gradient, max_relative_error, numerical_gradient, random_instance};
    use proptest::prelude::*;

    fn hyper(beta: f64, lambda: f64) -> Hyperparams {
        Hyperparams { beta, lambda, ..Hyperparams::default() }
    }

    #[test]
    fn kl_reference_values() {
        assert_eq!(kl_divergence(0.05, 0.05).unwrap(), 0.0);
        // 50-digit evaluation: 0.49463193721407275299…
        assert!((kl_divergence(0.05, 0.5).unwrap() - 0.494_631_937_214_072_7).abs() < 1e-15);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(kl_divergence(0.05, bad), Err(Error::DomainError(_))));
        }
    }

    proptest! {
        #[test]
        fn kl_is_positive_off_diagonal(rho in 0.001f64..0.999, rho_hat in 0.001f64..0.999) {
            let v = kl_divergence(rho, rho_hat).unwrap();
            prop_assert!(v >= 0.0);
            if (rho - rho_hat).abs() > 1e-6 {
                prop_assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn zero_network_on_zero_input() {
        let params = AutoencoderParams::zeros(4, 3);
        let batch = DMatrix::zeros(1, 4);
        let (cost, grad, stats) = sparse_cost_grad(&params, &batch, &hyper(0.0, 0.0), Exec::Sequential).unwrap();
        assert_eq!(cost, 0.0);
        assert!(stats.rho_hat.iter().all(|&r| r == 0.5));
        assert_eq!(grad.len(), params.len());
    }

    #[test]
    fn only_decay_survives_on_zero_data() {
        let mut params = AutoencoderParams::initialize(5, 4, 3);
        params.w2.fill(0.0);
        // hidden units sit at 0.5 on zero input, so W2 = 0 is what keeps the
        // reconstruction at b2 = 0
        let batch = DMatrix::zeros(6, 5);
        let lambda = 0.01;
        let (cost, _, _) = sparse_cost_grad(&params, &batch, &hyper(0.0, lambda), Exec::Sequential).unwrap();
        let decay = lambda * params.w1.iter().map(|w| w * w).sum::<f64>();
        assert!((cost - decay).abs() <= 1e-15 * decay.max(1.0), "{cost} vs {decay}");
    }

    #[test]
    fn sparsity_term_never_lowers_cost() {
        let (params, batch) = random_instance(8, 6, 10, 4);
        let plain = sparse_cost_grad(&params, &batch, &hyper(0.0, 1e-3), Exec::Sequential).unwrap().0;
        let sparse = sparse_cost_grad(&params, &batch, &hyper(3.0, 1e-3), Exec::Sequential).unwrap().0;
        assert!(sparse >= plain);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (params, batch) = random_instance(16, 9, 12, 1);
        for (beta, lambda) in [(0.0, 0.0), (3.0, 1e-3), (0.0, 3e-3), (3.0, 0.0)] {
            let h = hyper(beta, lambda);
            let (_, analytic, _) = sparse_cost_grad(&params, &batch, &h, Exec::Sequential).unwrap();
            let numeric = numerical_gradient(&params, &batch, &h, 1e-5).unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-6, "beta {beta} lambda {lambda}: {err}");
        }
    }

    #[test]
    fn squared_target_gradient_is_exact_too() {
        let h = Hyperparams { sparsity_target: SparsityTarget::SquaredActivation, ..hyper(3.0, 1e-3) };
        let err = check_gradient(10, 7, 9, &h, 21).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn harness_catches_corrupted_gradient() {
        let (params, batch) = random_instance(8, 5, 7, 2);
        let h = hyper(3.0, 1e-3);
        let (_, mut analytic, _) = sparse_cost_grad(&params, &batch, &h, Exec::Sequential).unwrap();
        let numeric = numerical_gradient(&params, &batch, &h, 1e-5).unwrap();
        let i = analytic.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
        analytic[i] *= 2.0;
        assert!(max_relative_error(&analytic, &numeric) > 1e-2);
    }

    #[test]
    fn chunked_evaluation_is_schedule_independent() {
        let (params, batch) = random_instance(6, 5, 700, 9);
        let h = hyper(3.0, 1e-3);
        let a = sparse_cost_grad(&params, &batch, &h, Exec::Sequential).unwrap();
        let b = sparse_cost_grad(&params, &batch, &h, Exec::Parallel).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn flat_round_trip() {
        let p = AutoencoderParams::initialize(7, 3, 1);
        assert_eq!(AutoencoderParams::from_flat(&p.to_flat(), 7, 3).unwrap(), p);
        assert!(AutoencoderParams::from_flat(&[0.0; 3], 7, 3).is_err());
    }
}
