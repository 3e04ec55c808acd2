use super::NormalizedSignature;

/// Smallest value written into an inked pixel, so painted pixels stay
/// distinguishable from untouched background even where the sample's
/// normalized time or pressure is 0.
pub const INK_FLOOR: f64 = 1.0 / 256.0;

/// Two-channel raster, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureImage {
    pub width: usize,
    pub height: usize,
    pub pressure: Vec<f64>,
    pub time: Vec<f64>,
}

impl SignatureImage {
    pub fn blank(width: usize, height: usize) -> Self {
        Self { width, height, pressure: vec![0.0; width * height], time: vec![0.0; width * height] }
    }

    /// `channel` 0 is pressure, 1 is time.
    #[inline]
    pub fn channel(&self, channel: usize) -> &[f64] {
        if channel == 0 {
            &self.pressure
        } else {
            &self.time
        }
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.channel(channel)[row * self.width + col]
    }

    pub fn inked_pixels(&self) -> usize {
        self.pressure.iter().filter(|&&v| v != 0.0).count()
    }

    fn paint(&mut self, col: i64, row: i64, p: f64, t: f64) {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return;
        }
        let idx = row as usize * self.width + col as usize;
        self.pressure[idx] = self.pressure[idx].max(p.max(INK_FLOOR));
        self.time[idx] = t.max(INK_FLOOR);
    }
}

/// Maps [0, 100]² onto the grid with a uniform scale, centred (letterbox).
/// The y axis is flipped so larger tablet y is higher in the image.
pub(crate) struct GridMap {
    scale: f64,
    off_x: f64,
    off_y: f64,
}

impl GridMap {
    pub(crate) fn new(width: usize, height: usize) -> Self {
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        let scale = w.min(h) / 100.0;
        Self { scale, off_x: (w - 100.0 * scale) / 2.0, off_y: (h - 100.0 * scale) / 2.0 }
    }

    pub(crate) fn pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let col = (x * self.scale + self.off_x).round() as i64;
        let row = ((100.0 - y) * self.scale + self.off_y).round() as i64;
        (col, row)
    }
}

/// Integer line stepping: `max(|dc|, |dr|) + 1` pixels, sample parameter
/// `i / steps` along the segment.
pub(crate) fn line_pixels(c0: i64, r0: i64, c1: i64, r1: i64) -> impl Iterator<Item = (i64, i64, f64)> {
    let (dc, dr) = (c1 - c0, r1 - r0);
    let steps = dc.abs().max(dr.abs());
    (0..=steps).map(move |i| {
        if steps == 0 {
            return (c0, r0, 1.0);
        }
        let f = i as f64 / steps as f64;
        let c = c0 + (i as f64 * dc as f64 / steps as f64).round() as i64;
        let r = r0 + (i as f64 * dr as f64 / steps as f64).round() as i64;
        (c, r, f)
    })
}

/// Draws consecutive pen-down samples as connected lines with linearly
/// interpolated pressure and time. A pen-up sample breaks the stroke.
/// Pressure keeps the per-pixel maximum; time keeps the latest sample.
pub fn rasterize(sig: &NormalizedSignature, width: usize, height: usize) -> SignatureImage {
    let width = width.max(8);
    let height = height.max(8);
    let map = GridMap::new(width, height);
    let mut img = SignatureImage::blank(width, height);
    let pts = &sig.points;
    for (i, p) in pts.iter().enumerate() {
        if !p.pen_down {
            continue;
        }
        let (c1, r1) = map.pixel(p.x, p.y);
        match i.checked_sub(1).map(|j| &pts[j]).filter(|q| q.pen_down) {
            Some(q) => {
                let (c0, r0) = map.pixel(q.x, q.y);
                for (c, r, f) in line_pixels(c0, r0, c1, r1) {
                    img.paint(c, r, q.p + f * (p.p - q.p), q.t + f * (p.t - q.t));
                }
            }
            None => img.paint(c1, r1, p.p, p.t),
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::NormalizedPoint;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn np(x: f64, y: f64, t: f64, pen_down: bool) -> NormalizedPoint {
        NormalizedPoint { x, y, t, pen_down, p: 0.5 }
    }

    /// Scans every pixel of each segment's bounding box and keeps those whose
    /// minor-axis coordinate equals the rounded line position at that
    /// major-axis offset.
    fn brute_force_pixels(sig: &NormalizedSignature, width: usize, height: usize) -> HashSet<(i64, i64)> {
        let map = GridMap::new(width, height);
        let mut set = HashSet::new();
        let inside = |c: i64, r: i64| c >= 0 && r >= 0 && c < width as i64 && r < height as i64;
        for (i, p) in sig.points.iter().enumerate() {
            if !p.pen_down {
                continue;
            }
            let (c1, r1) = map.pixel(p.x, p.y);
            let prev = if i > 0 && sig.points[i - 1].pen_down { Some(&sig.points[i - 1]) } else { None };
            let Some(q) = prev else {
                if inside(c1, r1) {
                    set.insert((c1, r1));
                }
                continue;
            };
            let (c0, r0) = map.pixel(q.x, q.y);
            let (dc, dr) = (c1 - c0, r1 - r0);
            let steps = dc.abs().max(dr.abs());
            for c in c0.min(c1)..=c0.max(c1) {
                for r in r0.min(r1)..=r0.max(r1) {
                    let on_line = if steps == 0 {
                        true
                    } else if dc.abs() >= dr.abs() {
                        let k = (c - c0) * dc.signum();
                        r == r0 + (k as f64 * dr as f64 / steps as f64).round() as i64
                    } else {
                        let k = (r - r0) * dr.signum();
                        c == c0 + (k as f64 * dc as f64 / steps as f64).round() as i64
                    };
                    if on_line && inside(c, r) {
                        set.insert((c, r));
                    }
                }
            }
        }
        set
    }

    #[test]
    fn diagonal_is_fully_connected() {
        let sig = NormalizedSignature { points: vec![np(0.0, 100.0, 0.0, true), np(100.0, 0.0, 1.0, true)] };
        let img = rasterize(&sig, 32, 32);
        for k in 0..32 {
            assert!(img.at(0, k, k) > 0.0 && img.at(1, k, k) > 0.0, "pixel {k}");
        }
        assert_eq!(img.inked_pixels(), 32);
        assert_eq!(img.at(1, 31, 31), 1.0);
        assert_eq!(img.at(1, 0, 0), INK_FLOOR);
    }

    #[test]
    fn pen_up_separates_points() {
        let sig = NormalizedSignature {
            points: vec![np(0.0, 50.0, 0.0, true), np(50.0, 50.0, 0.5, false), np(100.0, 50.0, 1.0, true)],
        };
        let img = rasterize(&sig, 16, 16);
        assert_eq!(img.inked_pixels(), 2);
        let row = GridMap::new(16, 16).pixel(0.0, 50.0).1 as usize;
        for c in 1..15 {
            assert_eq!(img.at(0, row, c), 0.0);
            assert_eq!(img.at(1, row, c), 0.0);
        }
    }

    #[test]
    fn letterbox_centres_non_square_grids() {
        let sig = NormalizedSignature { points: vec![np(0.0, 0.0, 0.0, true), np(100.0, 100.0, 1.0, true)] };
        let img = rasterize(&sig, 41, 21);
        // 20 rows of extent; columns centred with 10 pixels each side
        assert!(img.at(0, 20, 10) > 0.0 && img.at(0, 0, 30) > 0.0);
        assert_eq!(img.inked_pixels(), 21);
    }

    #[test]
    fn pressure_max_time_latest() {
        let mut a = np(10.0, 10.0, 0.2, true);
        a.p = 0.9;
        let mut b = np(90.0, 90.0, 0.4, true);
        b.p = 0.1;
        let mut c = np(10.0, 10.0, 0.8, true);
        c.p = 0.1;
        let img = rasterize(&NormalizedSignature { points: vec![a, b, c] }, 16, 16);
        let (col, row) = GridMap::new(16, 16).pixel(10.0, 10.0);
        assert_eq!(img.at(0, row as usize, col as usize), 0.9);
        assert_eq!(img.at(1, row as usize, col as usize), 0.8);
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracle(
            pts in prop::collection::vec((-5f64..105.0, -5f64..105.0, any::<bool>()), 2..40),
            w in 8usize..48, h in 8usize..48,
        ) {
            let points: Vec<NormalizedPoint> = pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y, pen))| np(x, y, i as f64 / pts.len() as f64, pen))
                .collect();
            let sig = NormalizedSignature { points };
            let img = rasterize(&sig, w, h);
            prop_assert_eq!(img.inked_pixels(), brute_force_pixels(&sig, w, h).len());
            prop_assert!(img.pressure.iter().chain(&img.time).all(|v| (0.0..=1.0).contains(v)));
            for (p, t) in img.pressure.iter().zip(&img.time) {
                prop_assert_eq!(*p == 0.0, *t == 0.0);
            }
        }
    }
}
