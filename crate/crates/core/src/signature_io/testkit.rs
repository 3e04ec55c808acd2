//! Deterministic synthetic signatures for tests, benches and demos.
//!
//! Each template id maps to a fixed family of parametric strokes (sums of
//! sinusoids along a left-to-right baseline). `jitter` scales every
//! perturbation: affine distortion about the centre, harmonic amplitude/phase drift, local
//! coordinate noise, writing-speed variation and pressure noise. With
//! `jitter == 0` the seed has no effect.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{serialize_svc2004, DatasetLayout, Label, RawSignature, SignaturePoint};
use crate::error::{Error, Result};
use crate::exec::{stream, stream_seed};

/// Skilled forgeries of user `u` in a synthetic dataset are drawn from
/// template `FORGERY_TEMPLATE_BASE + u`.
pub const FORGERY_TEMPLATE_BASE: u64 = 10_000;

const PEN_UP_GAP: usize = 3;

#[derive(Debug, Clone)]
struct Harmonic {
    amp: f64,
    freq: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
struct Stroke {
    points: usize,
    x0: f64,
    y0: f64,
    width: f64,
    hx: Vec<Harmonic>,
    hy: Vec<Harmonic>,
    pressure_peak: f64,
}

fn template_strokes(template: u64) -> Vec<Stroke> {
    let mut rng = stream(template, "testkit-template", "");
    let n_strokes = rng.random_range(1..=3usize);
    let total_width = rng.random_range(1500.0..2500.0);
    let slot = total_width / n_strokes as f64;
    let harmonics = |rng: &mut rand_chacha::ChaCha8Rng, amp: (f64, f64), freq: (f64, f64)| {
        (0..3)
            .map(|_| Harmonic {
                amp: rng.random_range(amp.0..amp.1),
                freq: rng.random_range(freq.0..freq.1),
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect::<Vec<_>>()
    };
    (0..n_strokes)
        .map(|s| Stroke {
            points: rng.random_range(50..90),
            x0: 2000.0 + s as f64 * slot,
            y0: 1500.0 + rng.random_range(-150.0..150.0),
            width: slot * rng.random_range(0.6..0.85),
            hx: harmonics(&mut rng, (30.0, 150.0), (0.5, 4.0)),
            hy: harmonics(&mut rng, (100.0, 400.0), (1.0, 6.0)),
            pressure_peak: rng.random_range(400.0..900.0),
        })
        .collect()
}

/// One signature of `user_template`, perturbed by `jitter ∈ [0, 1]`.
pub fn generate_synthetic_signature(seed: u64, user_template: u64, jitter: f64) -> RawSignature {
    let jitter = jitter.clamp(0.0, 1.0);
    let mut strokes = template_strokes(user_template);
    let mut rng = stream(seed, "testkit-jitter", &user_template.to_string());
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };

    for stroke in &mut strokes {
        for h in stroke.hx.iter_mut().chain(stroke.hy.iter_mut()) {
            h.amp *= 1.0 + jitter * 0.5 * gauss();
            h.phase += jitter * 0.5 * gauss();
        }
        stroke.width *= 1.0 + jitter * 0.3 * gauss();
        stroke.pressure_peak *= 1.0 + jitter * gauss();
    }
    let scale_x = 1.0 + jitter * 0.5 * gauss();
    let scale_y = 1.0 + jitter * 0.5 * gauss();
    let angle = jitter * 0.3 * gauss();
    let (shift_x, shift_y) = (jitter * 100.0 * gauss(), jitter * 100.0 * gauss());
    let speed = (1.0 + jitter * 0.5 * gauss()).max(0.2);
    let (sin_a, cos_a) = angle.sin_cos();

    let mut ideal: Vec<(f64, f64, bool, f64)> = Vec::new();
    for (s, stroke) in strokes.iter().enumerate() {
        if s > 0 {
            let &(px, py, _, _) = ideal.last().unwrap();
            let sx = stroke.x0 + harmonic_sum(&stroke.hx, 0.0);
            let sy = stroke.y0 + harmonic_sum(&stroke.hy, 0.0);
            for g in 1..=PEN_UP_GAP {
                let f = g as f64 / (PEN_UP_GAP + 1) as f64;
                ideal.push((px + f * (sx - px), py + f * (sy - py), false, 0.0));
            }
        }
        for i in 0..stroke.points {
            let u = i as f64 / (stroke.points - 1) as f64;
            let x = stroke.x0 + stroke.width * u + harmonic_sum(&stroke.hx, u);
            let y = stroke.y0 + harmonic_sum(&stroke.hy, u);
            let p = stroke.pressure_peak * (0.35 + 0.65 * (PI * u).sin().sqrt());
            ideal.push((x, y, true, p));
        }
    }

    let n = ideal.len() as f64;
    let cx = ideal.iter().map(|q| q.0).sum::<f64>() / n;
    let cy = ideal.iter().map(|q| q.1).sum::<f64>() / n;
    let mut t = 0.0;
    let points = ideal
        .into_iter()
        .enumerate()
        .map(|(i, (x, y, pen_down, p))| {
            let local = (jitter * 20.0 * gauss(), jitter * 20.0 * gauss());
            let (xs, ys) = ((x - cx) * scale_x, (y - cy) * scale_y);
            let xr = cx + cos_a * xs - sin_a * ys + shift_x + local.0;
            let yr = cy + sin_a * xs + cos_a * ys + shift_y + local.1;
            if i > 0 {
                t += (10.0 * speed * (1.0 + jitter * 0.2 * gauss())).round().max(1.0);
            }
            let pressure = if pen_down {
                (p * (1.0 + jitter * 0.1 * gauss())).round().max(1.0)
            } else {
                0.0
            };
            SignaturePoint {
                x: xr.round(),
                y: yr.round(),
                t,
                pen_down,
                pressure,
                azimuth: Some(0.0),
                altitude: Some(0.0),
            }
        })
        .collect();
    RawSignature {
        points,
        user_id: user_template.to_string(),
        label: Label::Genuine,
        source_path: String::new(),
    }
}

fn harmonic_sum(hs: &[Harmonic], u: f64) -> f64 {
    hs.iter().map(|h| h.amp * (2.0 * PI * h.freq * u + h.phase).sin()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub users: usize,
    pub genuine: usize,
    pub forgeries: usize,
    pub jitter: f64,
    pub seed: u64,
}

/// Writes an SVC2004-layout directory (`U{u}S{i}.TXT`, users numbered from 1)
/// and returns the layout that reads it back. User `u` signs with template
/// `u - 1`; that user's forgeries come from template
/// `FORGERY_TEMPLATE_BASE + u`.
pub fn write_synthetic_dataset(dir: &Path, spec: &SyntheticDatasetSpec) -> Result<DatasetLayout> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for u in 1..=spec.users {
        for i in 1..=spec.genuine + spec.forgeries {
            let template = if i <= spec.genuine { u as u64 - 1 } else { FORGERY_TEMPLATE_BASE + u as u64 };
            let seed = stream_seed(spec.seed, "testkit", &format!("{u}/{i}"));
            let sig = generate_synthetic_signature(seed, template, spec.jitter);
            let path = dir.join(format!("U{u}S{i}.TXT"));
            std::fs::write(&path, serialize_svc2004(&sig)).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(DatasetLayout {
        genuine_per_user: spec.genuine,
        forgery_per_user: spec.forgeries,
        ..DatasetLayout::svc2004()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::signature_io::{load_dataset, validate_points};

    /// Mean distance between two point streams after resampling both to a
    /// common index grid.
    fn mean_pointwise_distance(a: &RawSignature, b: &RawSignature) -> f64 {
        const N: usize = 128;
        let at = |s: &RawSignature, k: usize| {
            let pos = k as f64 * (s.len() - 1) as f64 / (N - 1) as f64;
            let i = (pos.floor() as usize).min(s.len() - 2);
            let f = pos - i as f64;
            let (p, q) = (s.points[i], s.points[i + 1]);
            (p.x + f * (q.x - p.x), p.y + f * (q.y - p.y))
        };
        (0..N)
            .map(|k| {
                let (ax, ay) = at(a, k);
                let (bx, by) = at(b, k);
                (ax - bx).hypot(ay - by)
            })
            .sum::<f64>()
            / N as f64
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate_synthetic_signature(5, 3, 0.1);
        let b = generate_synthetic_signature(5, 3, 0.1);
        assert_eq!(a, b);
        validate_points(&a.points).unwrap();
        assert!(a.points.iter().any(|p| !p.pen_down) || template_strokes(3).len() == 1);
    }

    #[test]
    fn zero_jitter_ignores_seed() {
        assert_eq!(generate_synthetic_signature(1, 4, 0.0), generate_synthetic_signature(99, 4, 0.0));
        assert_ne!(generate_synthetic_signature(1, 4, 0.05), generate_synthetic_signature(99, 4, 0.05));
    }

    #[test]
    fn templates_are_geometrically_distinct() {
        let mut between = 0.0;
        let mut within = 0.0;
        for s in 0..50 {
            let a = generate_synthetic_signature(s, 0, 0.05);
            let b = generate_synthetic_signature(s + 1000, 1, 0.05);
            let a2 = generate_synthetic_signature(s + 2000, 0, 0.05);
            between += mean_pointwise_distance(&a, &b);
            within += mean_pointwise_distance(&a, &a2);
        }
        assert!(between > 10.0 * within, "between {between} within {within}");
    }

    #[test]
    fn synthetic_tree_bucket_counts() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticDatasetSpec { users: 5, genuine: 8, forgeries: 8, jitter: 0.05, seed: 3 };
        let layout = write_synthetic_dataset(dir.path(), &spec).unwrap();
        let out = load_dataset(dir.path(), &layout, true, Exec::Parallel).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.dataset.users.len(), 5);
        for bucket in out.dataset.users.values() {
            assert_eq!(bucket.genuine.len(), 8);
            assert_eq!(bucket.forgeries.len(), 8);
        }
        assert_eq!(out.dataset.total(), 80);
    }
}
