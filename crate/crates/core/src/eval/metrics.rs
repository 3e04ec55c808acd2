use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances of genuine and forged attempts against one user's model.
/// Lower means more genuine-looking.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScorePools {
    pub user_id: String,
    pub genuine: Vec<f64>,
    pub forgery: Vec<f64>,
}

impl ScorePools {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self { user_id: user_id.into(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() {
            return Err(Error::EmptyPool("genuine"));
        }
        if self.forgery.is_empty() {
            return Err(Error::EmptyPool("forgery"));
        }
        if self.genuine.iter().chain(&self.forgery).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score pool"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub far: f64,
    pub frr: f64,
    /// Accept iff distance ≤ threshold. `None` marks the reject-all sentinel.
    pub threshold: Option<f64>,
}

/// Operating points in increasing threshold order: `far` rises from 0 to 1
/// while `frr` falls from 1 to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

pub fn roc_curve(pools: &ScorePools) -> Result<RocCurve> {
    pools.validate()?;
    let mut genuine = pools.genuine.clone();
    let mut forgery = pools.forgery.clone();
    genuine.sort_by(f64::total_cmp);
    forgery.sort_by(f64::total_cmp);
    let mut taus: Vec<f64> = genuine.iter().chain(&forgery).copied().collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();

    let (ng, nf) = (genuine.len() as f64, forgery.len() as f64);
    let mut points = Vec::with_capacity(taus.len() + 1);
    points.push(RocPoint { far: 0.0, frr: 1.0, threshold: None });
    let (mut gi, mut fi) = (0, 0);
    for tau in taus {
        while gi < genuine.len() && genuine[gi] <= tau {
            gi += 1;
        }
        while fi < forgery.len() && forgery[fi] <= tau {
            fi += 1;
        }
        points.push(RocPoint { far: fi as f64 / nf, frr: (genuine.len() - gi) as f64 / ng, threshold: Some(tau) });
    }
    Ok(RocCurve { points })
}

/// Equal error rate: linear interpolation between the two operating points
/// where `far − frr` changes sign.
pub fn eer(curve: &RocCurve) -> f64 {
    let pts = &curve.points;
    let gap = |p: &RocPoint| p.far - p.frr;
    match pts.iter().position(|p| gap(p) >= 0.0) {
        None => 1.0,
        Some(0) => pts[0].far,
        Some(i) => {
            let (a, b) = (&pts[i - 1], &pts[i]);
            let (ga, gb) = (gap(a), gap(b));
            let t = -ga / (gb - ga);
            (a.far + t * (b.far - a.far)).clamp(0.0, 1.0)
        }
    }
}

/// Trapezoidal area under true-accept rate `1 − frr` against `far`.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * ((1.0 - w[0].frr) + (1.0 - w[1].frr)) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}
