//! Raw point stream to two-channel (pressure, time) image.

mod geometry;
mod raster;
mod spline;

pub use geometry::{compute_statistics, normalize, rotate, NormalizedPoint, NormalizedSignature, SignatureStatistics};
pub use raster::{rasterize, SignatureImage, INK_FLOOR};
pub use spline::{natural_spline_second_derivatives, smooth};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::signature_io::RawSignature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub raster_width: usize,
    pub raster_height: usize,
    pub smooth: bool,
    pub smooth_factor: f64,
    pub rotate: bool,
    pub normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { raster_width: 64, raster_height: 64, smooth: true, smooth_factor: 2.0, rotate: true, normalize: true }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.raster_width < 8 || self.raster_height < 8 {
            return Err(Error::Config(format!(
                "raster must be at least 8x8, got {}x{}",
                self.raster_width, self.raster_height
            )));
        }
        if !(self.smooth_factor >= 1.0 && self.smooth_factor.is_finite()) {
            return Err(Error::Config(format!("smooth_factor must be >= 1, got {}", self.smooth_factor)));
        }
        Ok(())
    }
}

/// smooth → rotate → normalize → rasterize, each stage but the last
/// switchable in `config`.
pub fn preprocess_pipeline(sig: &RawSignature, config: &PreprocessConfig) -> Result<SignatureImage> {
    let smoothed;
    let mut current = sig;
    if config.smooth {
        smoothed = smooth(current, config.smooth_factor);
        current = &smoothed;
    }
    let rotated;
    if config.rotate {
        let stats = compute_statistics(current)?;
        rotated = rotate(current, stats.theta);
        current = &rotated;
    }
    let normalized = if config.normalize {
        normalize(current)?
    } else {
        NormalizedSignature::identity(current)
    };
    Ok(rasterize(&normalized, config.raster_width, config.raster_height))
}

/// Preprocesses many signatures, one task per signature. Failures carry the
/// source path.
pub fn preprocess_all<'a, I>(sigs: I, config: &PreprocessConfig, exec: Exec) -> Result<Vec<SignatureImage>>
where
    I: IntoIterator<Item = &'a RawSignature>,
{
    config.validate()?;
    let sigs: Vec<&RawSignature> = sigs.into_iter().collect();
    exec.map_slice(&sigs, |sig| preprocess_pipeline(sig, config).map_err(|e| e.in_file(&sig.source_path)))
        .into_iter()
        .collect()
}
