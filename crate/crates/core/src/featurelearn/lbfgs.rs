//! Limited-memory BFGS with a strong-Wolfe line search (bracketing phase
//! followed by zoom with safeguarded cubic interpolation).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    pub history: usize,
    /// Stop when `‖g‖∞` falls below this.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { max_iterations: 700, history: 20, grad_tol: 1e-8, c1: 1e-4, c2: 0.9, max_line_search: 25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found; the last accepted
    /// iterate is kept.
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Cost at the start point followed by one entry per accepted iterate.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Trial {
    step: f64,
    cost: f64,
    grad: Vec<f64>,
    slope: f64,
}

/// Minimizer of the cubic through (x1, f1, g1), (x2, f2, g2), clamped to
/// `bounds`; falls back to the midpoint when the cubic has no real minimum.
fn cubic_minimizer(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: (f64, f64)) -> f64 {
    let (lo, hi) = bounds;
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let disc = d1 * d1 - g1 * g2;
    if disc >= 0.0 {
        let d2 = disc.sqrt();
        let x = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if x.is_finite() {
            return x.clamp(lo, hi);
        }
    }
    (lo + hi) / 2.0
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evals_left: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, step: f64) -> Result<Trial> {
        self.evals_left = self.evals_left.saturating_sub(1);
        let point: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + step * d).collect();
        match (self.f)(&point) {
            Ok((cost, grad)) if cost.is_finite() => {
                let slope = dot(&grad, self.dir);
                Ok(Trial { step, cost, grad, slope })
            }
            // treat overflow as an uphill point so the bracket shrinks
            Ok(_) | Err(Error::NonFinite(_)) => {
                Ok(Trial { step, cost: f64::INFINITY, grad: Vec::new(), slope: f64::NAN })
            }
            Err(e) => Err(e),
        }
    }

    fn armijo_fails(&self, t: &Trial) -> bool {
        t.cost > self.f0 + self.c1 * t.step * self.slope0
    }

    fn curvature_ok(&self, t: &Trial) -> bool {
        t.slope.abs() <= -self.c2 * self.slope0
    }

    fn run(mut self, initial_step: f64) -> Result<Option<Trial>> {
        let mut prev = Trial { step: 0.0, cost: self.f0, grad: Vec::new(), slope: self.slope0 };
        let mut step = initial_step;
        let mut first = true;
        while self.evals_left > 0 {
            let cur = self.eval(step)?;
            if self.armijo_fails(&cur) || (!first && cur.cost >= prev.cost) {
                return self.zoom(prev, cur);
            }
            if self.curvature_ok(&cur) {
                return Ok(Some(cur));
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            let bounds = (cur.step + 0.01 * (cur.step - prev.step), cur.step * 10.0);
            step = cubic_minimizer(prev.step, prev.cost, prev.slope, cur.step, cur.cost, cur.slope, bounds);
            prev = cur;
            first = false;
        }
        Ok(None)
    }

    /// `lo` satisfies sufficient decrease and has the lower cost; the
    /// interval between `lo` and `hi` contains a strong-Wolfe point.
    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Result<Option<Trial>> {
        let dir_norm = inf_norm(self.dir);
        while self.evals_left > 0 {
            let (a, b) = (lo.step.min(hi.step), lo.step.max(hi.step));
            if (b - a) * dir_norm < 1e-16 * (1.0 + inf_norm(self.x)) {
                break;
            }
            let mut step = if hi.cost.is_finite() && hi.slope.is_finite() {
                cubic_minimizer(lo.step, lo.cost, lo.slope, hi.step, hi.cost, hi.slope, (a, b))
            } else {
                (a + b) / 2.0
            };
            // keep trial steps away from the bracket ends
            let margin = 0.1 * (b - a);
            if step - a < margin || b - step < margin {
                step = (a + b) / 2.0;
            }
            let cur = self.eval(step)?;
            if self.armijo_fails(&cur) || cur.cost >= lo.cost {
                hi = cur;
            } else {
                if self.curvature_ok(&cur) {
                    return Ok(Some(cur));
                }
                if cur.slope * (hi.step - lo.step) >= 0.0 {
                    hi = std::mem::replace(&mut lo, cur);
                } else {
                    lo = cur;
                }
            }
        }
        // best effort: a point with sufficient decrease still makes progress
        if lo.step > 0.0 && lo.cost < self.f0 && !lo.grad.is_empty() {
            return Ok(Some(lo));
        }
        Ok(None)
    }
}

/// Minimizes `f` from `x0`. `f` returns the cost and its gradient.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0;
    let (mut cost, mut grad) = f(&x)?;
    if !cost.is_finite() {
        return Err(Error::NonFinite("initial cost"));
    }
    let mut trace = vec![cost];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.history);
    let mut iterations = 0;
    let stop = loop {
        if inf_norm(&grad) <= opts.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break StopReason::MaxIterations;
        }

        // two-loop recursion
        let mut q: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir = q;
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            memory.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
        }
        let initial_step = if memory.is_empty() { (1.0 / inf_norm(&grad).max(1e-300)).min(1.0) } else { 1.0 };

        let search = LineSearch {
            f: &mut f,
            x: &x,
            dir: &dir,
            f0: cost,
            slope0: slope,
            c1: opts.c1,
            c2: opts.c2,
            evals_left: opts.max_line_search,
        };
        let Some(trial) = search.run(initial_step)? else {
            break StopReason::LineSearchFailure;
        };

        let s: Vec<f64> = dir.iter().map(|d| trial.step * d).collect();
        let y: Vec<f64> = trial.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if memory.len() == opts.history {
                memory.pop_front();
            }
            memory.push_back((s.clone(), y, 1.0 / sy));
        }
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        cost = trial.cost;
        grad = trial.grad;
        trace.push(cost);
        iterations += 1;
    };
    Ok(LbfgsResult { x, cost, trace, iterations, stop })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut f = 0.0;
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * x[i] * a - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        Ok((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let x0: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
        let opts = LbfgsOptions { max_iterations: 500, grad_tol: 1e-9, ..Default::default() };
        let res = minimize(rosenbrock, x0, &opts).unwrap();
        assert_eq!(res.stop, StopReason::GradientTolerance);
        assert!(res.x.iter().all(|v| (v - 1.0).abs() < 1e-6), "{:?}", res.x);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(res.trace.len(), res.iterations + 1);
    }

    #[test]
    fn quadratic_converges_quickly() {
        let diag = [1.0, 10.0, 100.0, 1000.0];
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let c = x.iter().zip(&diag).map(|(v, d)| 0.5 * d * v * v).sum();
            Ok((c, x.iter().zip(&diag).map(|(v, d)| d * v).collect()))
        };
        let res = minimize(f, vec![1.0; 4], &LbfgsOptions::default()).unwrap();
        assert_eq!(res.stop, StopReason::GradientTolerance);
        assert!(res.iterations < 40, "{}", res.iterations);
    }

    #[test]
    fn iteration_cap_and_single_step() {
        let x0 = vec![-1.2, 1.0];
        let opts = LbfgsOptions { max_iterations: 1, ..Default::default() };
        let res = minimize(rosenbrock, x0, &opts).unwrap();
        assert_eq!(res.stop, StopReason::MaxIterations);
        assert_eq!(res.iterations, 1);
        assert!(res.trace[1] <= res.trace[0]);
    }

    #[test]
    fn cubic_minimizer_finds_parabola_vertex() {
        // f = (x - 2)², sampled at 0 and 3
        let x = cubic_minimizer(0.0, 4.0, -4.0, 3.0, 1.0, 2.0, (0.0, 3.0));
        assert!((x - 2.0).abs() < 1e-12);
    }
}
