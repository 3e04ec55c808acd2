//! Capture-file parsing, dataset enumeration, model persistence and the
//! synthetic signature generator used by tests and demos.

mod dataset;
mod format;
mod model_file;
pub mod testkit;

pub use dataset::{load_dataset, Dataset, LoadOutcome, UserSignatures};
pub use format::{parse_signature, serialize_svc2004, Column, DatasetLayout, FormatPreset};
pub use model_file::{load_model, save_model, ModelFile, MODEL_FORMAT_VERSION};
pub use testkit::{generate_synthetic_signature, write_synthetic_dataset, SyntheticDatasetSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tablet sample. Coordinates and pressure are raw device units; they are
/// stored as `f64` so that preprocessing stages can carry sub-unit positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignaturePoint {
    pub x: f64,
    pub y: f64,
    /// Capture-device milliseconds.
    pub t: f64,
    pub pen_down: bool,
    pub pressure: f64,
    pub azimuth: Option<f64>,
    pub altitude: Option<f64>,
}

impl SignaturePoint {
    pub fn new(x: f64, y: f64, t: f64, pen_down: bool, pressure: f64) -> Self {
        Self { x, y, t, pen_down, pressure, azimuth: None, altitude: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Genuine,
    SkilledForgery,
    RandomForgery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSignature {
    pub points: Vec<SignaturePoint>,
    pub user_id: String,
    pub label: Label,
    pub source_path: String,
}

impl RawSignature {
    /// Builds a signature after checking the point-stream invariants.
    pub fn new(points: Vec<SignaturePoint>, user_id: impl Into<String>, label: Label) -> Result<Self> {
        validate_points(&points)?;
        Ok(Self { points, user_id: user_id.into(), label, source_path: String::new() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same metadata, new points. Used by the preprocessing transforms.
    pub fn with_points(&self, points: Vec<SignaturePoint>) -> Self {
        Self {
            points,
            user_id: self.user_id.clone(),
            label: self.label,
            source_path: self.source_path.clone(),
        }
    }
}

pub(crate) fn validate_points(points: &[SignaturePoint]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints(points.len()));
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite() && p.pressure.is_finite()) {
            return Err(Error::NonFinite("signature point"));
        }
        if p.pressure < 0.0 {
            return Err(Error::NegativePressure { line: i + 1 });
        }
        if i > 0 && p.t < points[i - 1].t {
            return Err(Error::NonMonotoneTime { line: i + 1 });
        }
    }
    if !points.iter().any(|p| p.pen_down) {
        return Err(Error::NoPenDown);
    }
    Ok(())
}
