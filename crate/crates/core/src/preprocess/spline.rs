use crate::signature_io::{RawSignature, SignaturePoint};

const MIN_SPLINE_POINTS: usize = 4;

/// Second derivatives of the natural cubic spline through `values` at unit
/// knot spacing (Thomas algorithm on `M[i-1] + 4·M[i] + M[i+1] = 6·Δ²y`).
pub fn natural_spline_second_derivatives(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let inner = n - 2;
    let mut diag = vec![4.0; inner];
    let mut rhs: Vec<f64> = (1..n - 1).map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1])).collect();
    for i in 1..inner {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
    }
    m[inner] = rhs[inner - 1] / diag[inner - 1];
    for i in (0..inner - 1).rev() {
        m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
    }
    m
}

fn eval_spline(values: &[f64], m: &[f64], u: f64) -> f64 {
    let i = (u.floor() as usize).min(values.len() - 2);
    let b = u - i as f64;
    let a = 1.0 - b;
    a * values[i] + b * values[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) / 6.0
}

fn lerp_at(values: impl Fn(usize) -> f64, len: usize, u: f64) -> f64 {
    let i = (u.floor() as usize).min(len - 2);
    let f = u - i as f64;
    values(i) + f * (values(i + 1) - values(i))
}

fn resample_run(run: &[SignaturePoint], factor: f64, out: &mut Vec<SignaturePoint>) {
    let n = run.len();
    let xs: Vec<f64> = run.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = run.iter().map(|p| p.y).collect();
    let (mx, my) = (natural_spline_second_derivatives(&xs), natural_spline_second_derivatives(&ys));
    let count = ((n as f64) * factor).round().max(n as f64) as usize;
    let opt_lerp = |get: fn(&SignaturePoint) -> Option<f64>, u: f64| {
        if run.iter().all(|p| get(p).is_some()) {
            Some(lerp_at(|i| get(&run[i]).unwrap(), n, u))
        } else {
            None
        }
    };
    for j in 0..count {
        let u = if j + 1 == count { (n - 1) as f64 } else { j as f64 * (n - 1) as f64 / (count - 1) as f64 };
        out.push(SignaturePoint {
            x: eval_spline(&xs, &mx, u),
            y: eval_spline(&ys, &my, u),
            t: lerp_at(|i| run[i].t, n, u),
            pen_down: true,
            pressure: lerp_at(|i| run[i].pressure, n, u),
            azimuth: opt_lerp(|p| p.azimuth, u),
            altitude: opt_lerp(|p| p.altitude, u),
        });
    }
}

/// Replaces every pen-down run of at least four points by a natural cubic
/// spline (parameterized by sample index) resampled at `factor` times the
/// run's point count. Shorter runs and pen-up points pass through.
pub fn smooth(sig: &RawSignature, factor: f64) -> RawSignature {
    let factor = factor.max(1.0);
    let pts = &sig.points;
    let mut out = Vec::with_capacity((pts.len() as f64 * factor) as usize + 1);
    let mut i = 0;
    while i < pts.len() {
        if !pts[i].pen_down {
            out.push(pts[i]);
            i += 1;
            continue;
        }
        let start = i;
        while i < pts.len() && pts[i].pen_down {
            i += 1;
        }
        let run = &pts[start..i];
        if run.len() >= MIN_SPLINE_POINTS {
            resample_run(run, factor, &mut out);
        } else {
            out.extend_from_slice(run);
        }
    }
    sig.with_points(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature_io::{Label, RawSignature};
    use nalgebra::{DMatrix, DVector};

    fn stroke(xy: &[(f64, f64)]) -> RawSignature {
        let points = xy
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| SignaturePoint::new(x, y, 10.0 * i as f64, true, 100.0 + i as f64))
            .collect();
        RawSignature::new(points, "u", Label::Genuine).unwrap()
    }

    /// Dense solve of the full natural-spline system including the
    /// boundary rows M[0] = M[n-1] = 0.
    fn dense_second_derivatives(values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        a[(0, 0)] = 1.0;
        a[(n - 1, n - 1)] = 1.0;
        for i in 1..n - 1 {
            a[(i, i - 1)] = 1.0;
            a[(i, i)] = 4.0;
            a[(i, i + 1)] = 1.0;
            b[i] = 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]);
        }
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn collinear_knots_stay_on_line() {
        let s = stroke(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0), (3.0, 7.0), (4.0, 9.0)]);
        for factor in [1.0, 2.0, 3.5] {
            for p in smooth(&s, factor).points {
                assert!((p.y - (2.0 * p.x + 1.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn short_runs_and_pen_up_pass_through() {
        let mut s = stroke(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]);
        assert_eq!(smooth(&s, 2.0), s);
        s.points.push(SignaturePoint::new(5.0, 5.0, 40.0, false, 0.0));
        assert_eq!(smooth(&s, 2.0).points, s.points);
    }

    #[test]
    fn factor_one_reproduces_knots() {
        let xy: Vec<(f64, f64)> = (0..12).map(|i| (i as f64 * 3.0 + (i * i) as f64 * 0.1, ((i * 7) % 5) as f64)).collect();
        let s = stroke(&xy);
        let out = smooth(&s, 1.0);
        assert_eq!(out.len(), s.len());
        for (p, q) in out.points.iter().zip(&s.points) {
            assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
            assert!((p.t - q.t).abs() < 1e-9 && (p.pressure - q.pressure).abs() < 1e-9);
        }
    }

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let ys: Vec<f64> = (0..17).map(|i| ((i * 37 % 11) as f64).sin() * 20.0).collect();
        let fast = natural_spline_second_derivatives(&ys);
        let dense = dense_second_derivatives(&ys);
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        for (i, y) in ys.iter().enumerate() {
            assert!((eval_spline(&ys, &dense, i as f64) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn resampling_count_and_ordering() {
        let xy: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (i as f64).sqrt())).collect();
        let mut s = stroke(&xy);
        s.points.insert(5, SignaturePoint { pen_down: false, ..s.points[4] });
        let out = smooth(&s, 2.0);
        // runs of 5 and 5 pen-down points, each doubled, plus the pen-up point
        assert_eq!(out.len(), 21);
        assert!(out.points.windows(2).all(|w| w[1].t >= w[0].t));
        assert!(!out.points[10].pen_down);
    }
}
