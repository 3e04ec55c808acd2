use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::signature_io::RawSignature;

/// Second moments of the point cloud and its orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignatureStatistics {
    pub sx2: f64,
    pub sy2: f64,
    pub cov_xy: f64,
    /// Major-axis angle in (−π/2, π/2].
    pub theta: f64,
}

/// Population moments over all points and the orthogonal-regression angle.
pub fn compute_statistics(sig: &RawSignature) -> Result<SignatureStatistics> {
    let n = sig.points.len() as f64;
    let (cx, cy) = centroid(sig);
    let (mut sx2, mut sy2, mut cov) = (0.0, 0.0, 0.0);
    for p in &sig.points {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sx2 += dx * dx;
        sy2 += dy * dy;
        cov += dx * dy;
    }
    sx2 /= n;
    sy2 /= n;
    cov /= n;
    if sx2 == 0.0 && sy2 == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(SignatureStatistics { sx2, sy2, cov_xy: cov, theta: orientation(sx2, sy2, cov) })
}

/// `atan((sy² − sx² + √((sy² − sx²)² + 4·cov²)) / (2·cov))`.
///
/// For `sy² < sx²` the numerator cancels, so the equivalent
/// `2·cov / (√(…) − (sy² − sx²))` is used instead. A zero covariance means
/// the principal axis is a coordinate axis.
fn orientation(sx2: f64, sy2: f64, cov: f64) -> f64 {
    if cov == 0.0 {
        return if sx2 >= sy2 { 0.0 } else { FRAC_PI_2 };
    }
    let diff = sy2 - sx2;
    let root = diff.hypot(2.0 * cov);
    let ratio = if diff >= 0.0 { (diff + root) / (2.0 * cov) } else { 2.0 * cov / (root - diff) };
    ratio.atan()
}

fn centroid(sig: &RawSignature) -> (f64, f64) {
    let n = sig.points.len() as f64;
    let (sx, sy) = sig.points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    (sx / n, sy / n)
}

/// Rotates every point by `−theta` about the centroid so that an axis at
/// angle `theta` ends up horizontal.
pub fn rotate(sig: &RawSignature, theta: f64) -> RawSignature {
    let (cx, cy) = centroid(sig);
    let (s, c) = theta.sin_cos();
    let points = sig
        .points
        .iter()
        .map(|p| {
            let (dx, dy) = (p.x - cx, p.y - cy);
            let mut q = *p;
            q.x = cx + c * dx + s * dy;
            q.y = cy - s * dx + c * dy;
            q
        })
        .collect();
    sig.with_points(points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    /// [0, 100]
    pub x: f64,
    /// [0, 100]
    pub y: f64,
    /// [0, 1]
    pub t: f64,
    pub pen_down: bool,
    /// [0, 1]
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSignature {
    pub points: Vec<NormalizedPoint>,
}

impl NormalizedSignature {
    /// Coordinates passed through unscaled; time and pressure still mapped to
    /// [0, 1]. Used when size normalization is switched off.
    pub fn identity(sig: &RawSignature) -> Self {
        let (t_scale, p_scale) = unit_scalers(sig);
        let points = sig
            .points
            .iter()
            .map(|q| NormalizedPoint { x: q.x, y: q.y, t: t_scale(q.t), pen_down: q.pen_down, p: p_scale(q.pressure, q.pen_down) })
            .collect();
        Self { points }
    }
}

fn unit_scalers(sig: &RawSignature) -> (impl Fn(f64) -> f64, impl Fn(f64, bool) -> f64) {
    let (t_min, t_max) = min_max(sig.points.iter().map(|p| p.t));
    let p_max = sig.points.iter().map(|p| p.pressure).fold(0.0, f64::max);
    let t_scale = move |t: f64| if t_max > t_min { (t - t_min) / (t_max - t_min) } else { 0.0 };
    let p_scale = move |p: f64, pen_down: bool| {
        if p_max > 0.0 {
            p / p_max
        } else if pen_down {
            1.0
        } else {
            0.0
        }
    };
    (t_scale, p_scale)
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Min-max scaling of each axis to [0, 100]; time and pressure to [0, 1].
pub fn normalize(sig: &RawSignature) -> Result<NormalizedSignature> {
    let (x_min, x_max) = min_max(sig.points.iter().map(|p| p.x));
    let (y_min, y_max) = min_max(sig.points.iter().map(|p| p.y));
    if x_max <= x_min {
        return Err(Error::DegenerateExtent("x"));
    }
    if y_max <= y_min {
        return Err(Error::DegenerateExtent("y"));
    }
    let (t_scale, p_scale) = unit_scalers(sig);
    let points = sig
        .points
        .iter()
        .map(|q| NormalizedPoint {
            x: (q.x - x_min) / (x_max - x_min) * 100.0,
            y: (q.y - y_min) / (y_max - y_min) * 100.0,
            t: t_scale(q.t),
            pen_down: q.pen_down,
            p: p_scale(q.pressure, q.pen_down),
        })
        .collect();
    Ok(NormalizedSignature { points })
}
