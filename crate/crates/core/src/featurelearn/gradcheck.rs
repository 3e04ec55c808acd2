//! Finite-difference verification of the autoencoder gradient.
//!
//! The reference objective here is a separate per-example loop evaluated in
//! double-double arithmetic (~106-bit significand). Central differences at
//! step 1e-5 on an `f64` objective lose about `ε·J/h ≈ 1e-9` to rounding,
//! which swamps coordinates whose true derivative is ~1e-4. With the
//! extended-precision objective only the O(h²) truncation term remains.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autoencoder::{sparse_cost_grad, AutoencoderParams, Hyperparams, SparsityTarget};
use crate::error::{Error, Result};
use crate::exec::{stream, Exec};

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (h, l) = quick_two_sum(hi, lo);
        Dd { hi: h, lo: l }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        Dd::norm(p, e + self.lo * b)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        Dd::norm(q1, q2).add(Dd::from(q3))
    }

    fn ldexp(self, n: i32) -> Dd {
        let s = 2f64.powi(n);
        Dd { hi: self.hi * s, lo: self.lo * s }
    }

    fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let n = (self.hi / LN2.hi).round();
        let r = self.sub(LN2.mul_f64(n)).ldexp(-10);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for i in 1..=14 {
            term = term.mul(r).div(Dd::from(i as f64));
            sum = sum.add(term);
        }
        for _ in 0..10 {
            sum = sum.mul(sum);
        }
        sum.ldexp(n as i32)
    }

    fn ln(self) -> Dd {
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y.add(self.mul(y.neg().exp())).sub(Dd::ONE);
        }
        y
    }

    fn sigmoid(self) -> Dd {
        Dd::ONE.div(Dd::ONE.add(self.neg().exp()))
    }
}

/// Parameters unpacked into double-double arrays (row-major matrices).
struct DdParams {
    k: usize,
    h: usize,
    w1: Vec<Dd>,
    w2: Vec<Dd>,
    b1: Vec<Dd>,
    b2: Vec<Dd>,
}

impl DdParams {
    fn new(params: &AutoencoderParams) -> Self {
        let (k, h) = (params.input_dim(), params.hidden_size());
        let w1 = (0..h).flat_map(|j| (0..k).map(move |c| (j, c))).map(|(j, c)| Dd::from(params.w1[(j, c)])).collect();
        let w2 = (0..k).flat_map(|r| (0..h).map(move |j| (r, j))).map(|(r, j)| Dd::from(params.w2[(r, j)])).collect();
        let b1 = params.b1.iter().map(|&v| Dd::from(v)).collect();
        let b2 = params.b2.iter().map(|&v| Dd::from(v)).collect();
        Self { k, h, w1, w2, b1, b2 }
    }

    #[cfg(test)]
    /// Entry `i` in the flat order W1, W2 (column-major), b1, b2.
    fn slot(&mut self, i: usize) -> &mut Dd {
        let hk = self.h * self.k;
        if i < hk {
            let (j, c) = (i % self.h, i / self.h);
            &mut self.w1[j * self.k + c]
        } else if i < 2 * hk {
            let i = i - hk;
            let (r, j) = (i % self.k, i / self.k);
            &mut self.w2[r * self.h + j]
        } else if i < 2 * hk + self.h {
            &mut self.b1[i - 2 * hk]
        } else {
            &mut self.b2[i - 2 * hk - self.h]
        }
    }
}

/// The sparse autoencoder objective, example by example, in double-double.
#[cfg(test)]
fn reference_cost(p: &DdParams, batch: &DMatrix<f64>, hyper: &Hyperparams) -> Dd {
    let (m, k, h) = (batch.nrows(), p.k, p.h);
    let squared = hyper.sparsity_target == SparsityTarget::SquaredActivation;
    let mut err = Dd::ZERO;
    let mut act_sum = vec![Dd::ZERO; h];
    let mut a = vec![Dd::ZERO; h];
    for i in 0..m {
        for j in 0..h {
            let mut z = p.b1[j];
            for c in 0..k {
                z = z.add(p.w1[j * k + c].mul_f64(batch[(i, c)]));
            }
            a[j] = z.sigmoid();
            act_sum[j] = act_sum[j].add(if squared { a[j].mul(a[j]) } else { a[j] });
        }
        for r in 0..k {
            let mut out = p.b2[r];
            for j in 0..h {
                out = out.add(p.w2[r * h + j].mul(a[j]));
            }
            let diff = out.sub(Dd::from(batch[(i, r)]));
            err = err.add(diff.mul(diff));
        }
    }
    let mut cost = err.div(Dd::from(m as f64));
    let decay = p.w1.iter().chain(&p.w2).fold(Dd::ZERO, |s, w| s.add(w.mul(*w)));
    cost = cost.add(decay.mul_f64(hyper.lambda));
    if hyper.beta > 0.0 {
        let rho = Dd::from(hyper.rho);
        let one_minus = Dd::ONE.sub(rho);
        let mut kl = Dd::ZERO;
        for s in &act_sum {
            let rho_hat = s.div(Dd::from(m as f64));
            kl = kl.add(rho.mul(rho.div(rho_hat).ln())).add(one_minus.mul(one_minus.div(Dd::ONE.sub(rho_hat)).ln()));
        }
        cost = cost.add(kl.mul_f64(hyper.beta));
    }
    cost
}

fn kl_term(rho: f64, act_sum: Dd, m: usize) -> Dd {
    let rho_hat = act_sum.div(Dd::from(m as f64));
    let r = Dd::from(rho);
    let q = Dd::ONE.sub(r);
    r.mul(r.div(rho_hat).ln()).add(q.mul(q.div(Dd::ONE.sub(rho_hat)).ln()))
}

/// Forward pass cached in double-double so that each perturbed objective
/// only recomputes the terms touched by one parameter.
struct Cache<'a> {
    p: DdParams,
    batch: &'a DMatrix<f64>,
    hyper: &'a Hyperparams,
    /// `m × h` pre-activations and activations, row-major.
    z: Vec<Dd>,
    a: Vec<Dd>,
    /// `m × k` residuals `x̂ − x`, row-major.
    diff: Vec<Dd>,
    err: Dd,
    act_sum: Vec<Dd>,
    kl: Vec<Dd>,
    kl_total: Dd,
    decay: Dd,
}

impl<'a> Cache<'a> {
    fn new(params: &AutoencoderParams, batch: &'a DMatrix<f64>, hyper: &'a Hyperparams) -> Self {
        let p = DdParams::new(params);
        let (m, k, h) = (batch.nrows(), p.k, p.h);
        let mut z = vec![Dd::ZERO; m * h];
        let mut a = vec![Dd::ZERO; m * h];
        let mut diff = vec![Dd::ZERO; m * k];
        let mut err = Dd::ZERO;
        let mut act_sum = vec![Dd::ZERO; h];
        for i in 0..m {
            for j in 0..h {
                let mut s = p.b1[j];
                for c in 0..k {
                    s = s.add(p.w1[j * k + c].mul_f64(batch[(i, c)]));
                }
                z[i * h + j] = s;
                a[i * h + j] = s.sigmoid();
            }
            for j in 0..h {
                act_sum[j] = act_sum[j].add(sparsity_input(hyper, a[i * h + j]));
            }
            for r in 0..k {
                let mut out = p.b2[r];
                for j in 0..h {
                    out = out.add(p.w2[r * h + j].mul(a[i * h + j]));
                }
                let d = out.sub(Dd::from(batch[(i, r)]));
                diff[i * k + r] = d;
                err = err.add(d.mul(d));
            }
        }
        let kl: Vec<Dd> = act_sum.iter().map(|&s| kl_term(hyper.rho, s, m)).collect();
        let kl_total = kl.iter().fold(Dd::ZERO, |t, v| t.add(*v));
        let decay = p.w1.iter().chain(&p.w2).fold(Dd::ZERO, |s, w| s.add(w.mul(*w)));
        Self { p, batch, hyper, z, a, diff, err, act_sum, kl, kl_total, decay }
    }

    fn assemble(&self, err: Dd, kl_total: Dd, decay: Dd) -> Dd {
        let mut cost = err.div(Dd::from(self.batch.nrows() as f64)).add(decay.mul_f64(self.hyper.lambda));
        if self.hyper.beta > 0.0 {
            cost = cost.add(kl_total.mul_f64(self.hyper.beta));
        }
        cost
    }

    /// Objective with flat parameter `idx` shifted by `delta`.
    fn shifted(&self, idx: usize, delta: Dd) -> Dd {
        let (m, k, h) = (self.batch.nrows(), self.p.k, self.p.h);
        let hk = h * k;
        let weight_decay = |w: Dd| self.decay.sub(w.mul(w)).add(w.add(delta).mul(w.add(delta)));
        if idx < hk || (2 * hk..2 * hk + h).contains(&idx) {
            // hidden unit j, input column c (None for the bias)
            let (j, col) = if idx < hk { (idx % h, Some(idx / h)) } else { (idx - 2 * hk, None) };
            let mut err = self.err;
            let mut act = self.act_sum[j];
            for i in 0..m {
                let dz = match col {
                    Some(c) => delta.mul_f64(self.batch[(i, c)]),
                    None => delta,
                };
                let old = self.a[i * h + j];
                let new = self.z[i * h + j].add(dz).sigmoid();
                act = act.sub(sparsity_input(self.hyper, old)).add(sparsity_input(self.hyper, new));
                let da = new.sub(old);
                for r in 0..k {
                    let d = self.diff[i * k + r];
                    let d2 = d.add(self.p.w2[r * h + j].mul(da));
                    err = err.add(d2.mul(d2).sub(d.mul(d)));
                }
            }
            let kl = self.kl_total.sub(self.kl[j]).add(kl_term(self.hyper.rho, act, m));
            let decay = match col {
                Some(c) => weight_decay(self.p.w1[j * k + c]),
                None => self.decay,
            };
            self.assemble(err, kl, decay)
        } else {
            // output row r, hidden column j (None for the bias)
            let (r, hid) = if idx < 2 * hk { ((idx - hk) % k, Some((idx - hk) / k)) } else { (idx - 2 * hk - h, None) };
            let mut err = self.err;
            for i in 0..m {
                let dx = match hid {
                    Some(j) => delta.mul(self.a[i * h + j]),
                    None => delta,
                };
                let d = self.diff[i * k + r];
                let d2 = d.add(dx);
                err = err.add(d2.mul(d2).sub(d.mul(d)));
            }
            let decay = match hid {
                Some(j) => weight_decay(self.p.w2[r * h + j]),
                None => self.decay,
            };
            self.assemble(err, self.kl_total, decay)
        }
    }
}

fn sparsity_input(hyper: &Hyperparams, a: Dd) -> Dd {
    match hyper.sparsity_target {
        SparsityTarget::Activation => a,
        SparsityTarget::SquaredActivation => a.mul(a),
    }
}

/// Central differences `(J(θ + h·eᵢ) − J(θ − h·eᵢ)) / 2h` of the reference
/// objective.
pub fn numerical_gradient(params: &AutoencoderParams, batch: &DMatrix<f64>, hyper: &Hyperparams, step: f64) -> Result<Vec<f64>> {
    if batch.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch { expected: params.input_dim(), found: batch.ncols() });
    }
    let cache = Cache::new(params, batch, hyper);
    let grad = Exec::Parallel.map_range(params.len(), |i| {
        let d = cache.shifted(i, Dd::from(step)).sub(cache.shifted(i, Dd::from(-step)));
        (d.hi + d.lo) / (2.0 * step)
    });
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("numerical gradient"));
    }
    Ok(grad)
}

/// Largest coordinate-wise relative error `|gₐ − gₙ| / max(|gₐ|, |gₙ|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Initialized weights, small random biases and a standard-normal batch.
pub fn random_instance(k: usize, h: usize, m: usize, seed: u64) -> (AutoencoderParams, DMatrix<f64>) {
    let mut params = AutoencoderParams::initialize(k, h, seed);
    let mut rng = stream(seed, "gradcheck", "");
    for v in params.b1.iter_mut().chain(params.b2.iter_mut()) {
        *v = rng.random_range(-0.5..0.5);
    }
    let batch = DMatrix::from_fn(m, k, |_, _| StandardNormal.sample(&mut rng));
    (params, batch)
}

/// Builds a random `(k, h, m)` instance and returns the maximum relative
/// error between the analytic gradient and central differences (step 1e-5).
pub fn check_gradient(k: usize, h: usize, m: usize, hyper: &Hyperparams, seed: u64) -> Result<f64> {
    let (params, batch) = random_instance(k, h, m, seed);
    let (_, analytic, _) = sparse_cost_grad(&params, &batch, hyper, Exec::Sequential)?;
    let numeric = numerical_gradient(&params, &batch, hyper, 1e-5)?;
    Ok(max_relative_error(&analytic, &numeric))
}
