use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::stream;
use crate::preprocess::SignatureImage;

/// `m × d` patch matrix, one flattened two-channel patch per row
/// (pressure channel first, each channel row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub data: DMatrix<f64>,
    pub patch_h: usize,
    pub patch_w: usize,
    pub mean_removed: bool,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// Copies the two-channel patch at (`top`, `left`) into `out`.
pub(crate) fn extract_patch(img: &SignatureImage, top: usize, left: usize, ph: usize, pw: usize, out: &mut [f64]) {
    let mut k = 0;
    for ch in 0..2 {
        let plane = img.channel(ch);
        for r in top..top + ph {
            let row = &plane[r * img.width + left..r * img.width + left + pw];
            out[k..k + pw].copy_from_slice(row);
            k += pw;
        }
    }
}

/// Draws `n_patches` patches uniformly over all (image, top-left) pairs.
pub fn sample_patches(
    images: &[SignatureImage],
    n_patches: usize,
    patch_h: usize,
    patch_w: usize,
    seed: u64,
) -> Result<PatchSet> {
    if images.is_empty() || n_patches == 0 || patch_h == 0 || patch_w == 0 {
        return Err(Error::Config("patch sampling needs images, a positive count and patch size".into()));
    }
    for img in images {
        if img.height < patch_h || img.width < patch_w {
            return Err(Error::PatchTooLarge { patch_h, patch_w, height: img.height, width: img.width });
        }
    }
    // cumulative position counts, so the draw is uniform over (image, position)
    let mut cumulative = Vec::with_capacity(images.len());
    let mut total = 0usize;
    for img in images {
        total += (img.height - patch_h + 1) * (img.width - patch_w + 1);
        cumulative.push(total);
    }
    let d = 2 * patch_h * patch_w;
    let mut rng = stream(seed, "patches", "");
    let mut rows = vec![0.0; n_patches * d];
    for row in rows.chunks_exact_mut(d) {
        let pick = rng.random_range(0..total);
        let i = cumulative.partition_point(|&c| c <= pick);
        let local = pick - if i == 0 { 0 } else { cumulative[i - 1] };
        let img = &images[i];
        let cols = img.width - patch_w + 1;
        extract_patch(img, local / cols, local % cols, patch_h, patch_w, row);
    }
    Ok(PatchSet { data: DMatrix::from_row_slice(n_patches, d, &rows), patch_h, patch_w, mean_removed: false })
}

fn subtract_row_means(data: &mut DMatrix<f64>) {
    let d = data.ncols() as f64;
    for mut row in data.row_iter_mut() {
        let mean = row.sum() / d;
        row.add_scalar_mut(-mean);
    }
}

/// Subtracts each patch's own mean (over both channels).
pub fn remove_dc(mut patches: PatchSet) -> Result<PatchSet> {
    if patches.mean_removed {
        return Err(Error::AlreadyRemoved);
    }
    subtract_row_means(&mut patches.data);
    patches.mean_removed = true;
    Ok(patches)
}
