//! Dense convolution of the learned encoder over signature images, followed
//! by mean pooling into a fixed-length descriptor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::featurelearn::{extract_patch, sigmoid, FeatureBank};
use crate::preprocess::SignatureImage;

pub const DEFAULT_POOL: usize = 3;

/// Hidden activations at every valid patch position.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub hidden: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// `hidden × out_h × out_w`, feature-major then row-major.
    pub data: Vec<f64>,
}

impl FeatureMaps {
    #[inline]
    pub fn at(&self, feature: usize, row: usize, col: usize) -> f64 {
        self.data[(feature * self.out_h + row) * self.out_w + col]
    }

    pub fn map(&self, feature: usize) -> &[f64] {
        let n = self.out_h * self.out_w;
        &self.data[feature * n..(feature + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub pool_rows: usize,
    pub pool_cols: usize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// The bank folded into a single affine map on raw patches, reusable across
/// images.
#[derive(Debug, Clone)]
pub struct Encoder {
    a_t: DMatrix<f64>,
    c: DVector<f64>,
    patch_h: usize,
    patch_w: usize,
}

impl Encoder {
    pub fn new(bank: &FeatureBank) -> Result<Self> {
        bank.validate()?;
        let (a, c) = bank.encoder_affine();
        Ok(Self { a_t: a.transpose(), c, patch_h: bank.patch_h, patch_w: bank.patch_w })
    }

    pub fn hidden_size(&self) -> usize {
        self.c.len()
    }

    pub fn convolve(&self, image: &SignatureImage) -> Result<FeatureMaps> {
        let (ph, pw) = (self.patch_h, self.patch_w);
        if image.height < ph || image.width < pw {
            return Err(Error::ImageTooSmall { patch_h: ph, patch_w: pw, height: image.height, width: image.width });
        }
        let (out_h, out_w) = (image.height - ph + 1, image.width - pw + 1);
        let d = 2 * ph * pw;
        let positions = out_h * out_w;
        // im2col: one raw patch per row
        let mut cols = DMatrix::<f64>::zeros(positions, d);
        let mut buf = vec![0.0; d];
        for r in 0..out_h {
            for c in 0..out_w {
                extract_patch(image, r, c, ph, pw, &mut buf);
                let row = r * out_w + c;
                for (k, v) in buf.iter().enumerate() {
                    cols[(row, k)] = *v;
                }
            }
        }
        let z = cols * &self.a_t;
        let hidden = self.hidden_size();
        let mut data = vec![0.0; hidden * positions];
        for j in 0..hidden {
            let bias = self.c[j];
            let col = z.column(j);
            for (out, v) in data[j * positions..(j + 1) * positions].iter_mut().zip(col.iter()) {
                *out = sigmoid(v + bias);
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature maps"));
        }
        Ok(FeatureMaps { hidden, out_h, out_w, data })
    }

    pub fn extract(&self, image: &SignatureImage, pool_rows: usize, pool_cols: usize) -> Result<FeatureVector> {
        mean_pool(&self.convolve(image)?, pool_rows, pool_cols)
    }
}

/// Sigmoid activations of every hidden unit at every valid position.
pub fn convolve(bank: &FeatureBank, image: &SignatureImage) -> Result<FeatureMaps> {
    Encoder::new(bank)?.convolve(image)
}

/// Start offsets of `parts` near-equal segments of `0..len`; the last
/// `len % parts` segments are one longer.
fn boundaries(len: usize, parts: usize) -> Vec<usize> {
    let (q, rem) = (len / parts, len % parts);
    let short = parts - rem;
    (0..=parts).map(|i| i * q + i.saturating_sub(short)).collect()
}

pub fn mean_pool(maps: &FeatureMaps, pool_rows: usize, pool_cols: usize) -> Result<FeatureVector> {
    if pool_rows == 0 || pool_cols == 0 || pool_rows > maps.out_h || pool_cols > maps.out_w {
        return Err(Error::PoolTooFine { rows: pool_rows, cols: pool_cols, map_h: maps.out_h, map_w: maps.out_w });
    }
    let rb = boundaries(maps.out_h, pool_rows);
    let cb = boundaries(maps.out_w, pool_cols);
    let mut values = Vec::with_capacity(maps.hidden * pool_rows * pool_cols);
    for j in 0..maps.hidden {
        let map = maps.map(j);
        for pr in 0..pool_rows {
            for pc in 0..pool_cols {
                let mut sum = 0.0;
                for r in rb[pr]..rb[pr + 1] {
                    sum += map[r * maps.out_w + cb[pc]..r * maps.out_w + cb[pc + 1]].iter().sum::<f64>();
                }
                values.push(sum / ((rb[pr + 1] - rb[pr]) * (cb[pc + 1] - cb[pc])) as f64);
            }
        }
    }
    Ok(FeatureVector { values, pool_rows, pool_cols })
}

pub fn extract(bank: &FeatureBank, image: &SignatureImage, pool_rows: usize, pool_cols: usize) -> Result<FeatureVector> {
    mean_pool(&convolve(bank, image)?, pool_rows, pool_cols)
}

/// Extracts descriptors for many images, one task per image.
pub fn extract_all(
    bank: &FeatureBank,
    images: &[SignatureImage],
    pool_rows: usize,
    pool_cols: usize,
    exec: Exec,
) -> Result<Vec<FeatureVector>> {
    let enc = Encoder::new(bank)?;
    exec.map_slice(images, |img| enc.extract(img, pool_rows, pool_cols)).into_iter().collect()
}
