//! Self-taught feature learning: random patches of unlabeled signature
//! images are DC-removed, whitened and used to train a sparse autoencoder
//! with L-BFGS.

mod autoencoder;
mod gradcheck;
pub mod lbfgs;
mod patches;
mod whitening;

pub use autoencoder::{kl_divergence, sparse_cost_grad, AutoencoderParams, Hyperparams, SparsityStats, SparsityTarget};
pub use gradcheck::{check_gradient, max_relative_error, numerical_gradient, random_instance};
pub use lbfgs::{LbfgsOptions, StopReason};
pub use patches::{remove_dc, sample_patches, PatchSet};
pub(crate) use autoencoder::sigmoid;
pub(crate) use patches::extract_patch;
pub use whitening::{apply_whitening, fit_whitening, WhiteningConfig, WhiteningMode, WhiteningTransform};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::{stream_seed, Exec};
use crate::preprocess::SignatureImage;

/// A trained encoder together with the whitening it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    pub params: AutoencoderParams,
    pub whitening: WhiteningTransform,
    pub hyper: Hyperparams,
    pub patch_h: usize,
    pub patch_w: usize,
    pub cost_trace: Vec<f64>,
    pub stop: StopReason,
}

impl FeatureBank {
    pub fn hidden_size(&self) -> usize {
        self.params.hidden_size()
    }

    /// Patch dimension `2 · patch_h · patch_w`.
    pub fn patch_dim(&self) -> usize {
        self.whitening.input_dim()
    }

    /// The per-patch DC removal, whitening and first layer folded into one
    /// affine map on raw patches: `hidden = σ(A·p + c)`.
    pub fn encoder_affine(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut basis = self.whitening.basis.clone();
        let d = basis.ncols() as f64;
        for mut row in basis.row_iter_mut() {
            let mean = row.sum() / d;
            row.add_scalar_mut(-mean);
        }
        let a = &self.params.w1 * basis;
        let c = &self.params.b1 - &self.params.w1 * (&self.whitening.basis * &self.whitening.mean);
        (a, c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.input_dim() != self.whitening.retained_k {
            return Err(Error::DimensionMismatch {
                expected: self.whitening.retained_k,
                found: self.params.input_dim(),
            });
        }
        if self.patch_dim() != 2 * self.patch_h * self.patch_w {
            return Err(Error::DimensionMismatch { expected: 2 * self.patch_h * self.patch_w, found: self.patch_dim() });
        }
        if !self.params.is_finite() {
            return Err(Error::NonFinite("feature bank weights"));
        }
        Ok(())
    }
}

/// Everything needed to go from unlabeled images to a [`FeatureBank`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub patch_h: usize,
    pub patch_w: usize,
    pub n_patches: usize,
    pub hidden: usize,
    pub hyper: Hyperparams,
    pub whitening: WhiteningConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            patch_h: 8,
            patch_w: 8,
            n_patches: 50_000,
            hidden: 2000,
            hyper: Hyperparams::default(),
            whitening: WhiteningConfig::default(),
        }
    }
}

/// Samples patches from `images` (seeded from `hyper.seed`) and trains.
pub fn learn_features(images: &[SignatureImage], cfg: &LearnConfig, exec: Exec) -> Result<FeatureBank> {
    let seed = stream_seed(cfg.hyper.seed, "patches", "");
    let patches = sample_patches(images, cfg.n_patches, cfg.patch_h, cfg.patch_w, seed)?;
    train_features(patches, cfg.hidden, &cfg.hyper, &cfg.whitening, exec)
}

/// DC removal, whitening, initialization and L-BFGS training of the sparse
/// autoencoder with `hidden` units.
pub fn train_features(
    patches: PatchSet,
    hidden: usize,
    hyper: &Hyperparams,
    whitening: &WhiteningConfig,
    exec: Exec,
) -> Result<FeatureBank> {
    hyper.validate()?;
    if hidden == 0 {
        return Err(Error::Config("hidden size must be at least 1".into()));
    }
    if patches.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("patch set"));
    }
    let (patch_h, patch_w) = (patches.patch_h, patches.patch_w);
    let patches = if patches.mean_removed { patches } else { remove_dc(patches)? };
    let tf = fit_whitening(&patches, whitening, exec)?;
    let batch = tf.transform_rows(&patches.data)?;
    let k = tf.retained_k;
    drop(patches);

    let init = AutoencoderParams::initialize(k, hidden, hyper.seed);
    let opts = LbfgsOptions { max_iterations: hyper.iterations, history: hyper.history, ..LbfgsOptions::default() };
    let result = lbfgs::minimize(
        |flat| {
            let params = AutoencoderParams::from_flat(flat, k, hidden)?;
            let (cost, grad, _) = sparse_cost_grad(&params, &batch, hyper, exec)?;
            Ok((cost, grad))
        },
        init.to_flat(),
        &opts,
    )?;
    match result.stop {
        StopReason::LineSearchFailure if result.iterations == 0 => {
            return Err(Error::LineSearchFailure { iteration: 0 });
        }
        StopReason::LineSearchFailure => {
            log::warn!("line search failed after {} iterations; keeping the last iterate", result.iterations)
        }
        _ => {}
    }
    log::info!(
        "feature learning: {} iterations, cost {:.6} -> {:.6} ({:?})",
        result.iterations,
        result.trace[0],
        result.cost,
        result.stop
    );
    let params = AutoencoderParams::from_flat(&result.x, k, hidden)?;
    if !params.is_finite() {
        return Err(Error::NonFinite("trained weights"));
    }
    Ok(FeatureBank { params, whitening: tf, hyper: *hyper, patch_h, patch_w, cost_trace: result.trace, stop: result.stop })
}
