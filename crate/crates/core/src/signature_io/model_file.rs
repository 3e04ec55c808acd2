//! Binary persistence of feature banks and enrolled user models.
//!
//! Layout (little-endian): magic `SGVB`, `u16` version, then sections of
//! `[4-byte tag][u64 length][payload][u32 crc32(payload)]`. Tags: `CONF`
//! (effective configuration text, once), `BANK` (at most once), `USER`
//! (one per model). Floats are stored as raw IEEE-754 bits so a load/save
//! round trip is bit-exact.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::featurelearn::{
    AutoencoderParams, FeatureBank, Hyperparams, SparsityTarget, StopReason, WhiteningMode, WhiteningTransform,
};
use crate::verify::{CovarianceFactor, UserModel};

pub const MODEL_FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"SGVB";

/// Everything a model file can carry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: String,
    pub bank: Option<FeatureBank>,
    pub models: Vec<UserModel>,
}

impl ModelFile {
    pub fn model(&self, user: &str) -> Option<&UserModel> {
        self.models.iter().find(|m| m.user_id == user)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        let mut conf = Writer::default();
        conf.str(&self.config);
        section(&mut out, b"CONF", conf.0);
        if let Some(bank) = &self.bank {
            if !bank.params.is_finite() || bank.whitening.basis.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("feature bank"));
            }
            section(&mut out, b"BANK", encode_bank(bank));
        }
        for m in &self.models {
            if m.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("user model"));
            }
            section(&mut out, b"USER", encode_user(m));
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(Error::CorruptFile("missing magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: MODEL_FORMAT_VERSION });
        }
        let mut file = ModelFile { config: String::new(), bank: None, models: Vec::new() };
        let mut r = Reader { buf: bytes, pos: 6 };
        let mut seen_conf = false;
        while r.pos < bytes.len() {
            let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
            let len = r.u64()? as usize;
            let payload = r.take(len)?;
            let crc = r.u32()?;
            if crc32fast::hash(payload) != crc {
                return Err(Error::CorruptFile(format!("checksum mismatch in {} section", String::from_utf8_lossy(&tag))));
            }
            let mut p = Reader { buf: payload, pos: 0 };
            match &tag {
                b"CONF" if !seen_conf => {
                    file.config = p.str()?;
                    seen_conf = true;
                }
                b"BANK" if file.bank.is_none() => file.bank = Some(decode_bank(&mut p)?),
                b"USER" => file.models.push(decode_user(&mut p)?),
                _ => return Err(Error::CorruptFile(format!("unexpected section {}", String::from_utf8_lossy(&tag)))),
            }
            if p.pos != payload.len() {
                return Err(Error::CorruptFile("trailing bytes in section".into()));
            }
        }
        if !seen_conf {
            return Err(Error::CorruptFile("missing CONF section".into()));
        }
        Ok(file)
    }
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    let bytes = file.encode()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelFile::decode(&bytes).map_err(|e| e.in_file(path))
}

fn section(out: &mut Vec<u8>, tag: &[u8; 4], payload: Vec<u8>) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }
    /// Shape then column-major entries.
    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        for x in m.iter() {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptFile("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptFile("size overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.checked_mul(elem).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(Error::CorruptFile("length exceeds section".into()));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptFile("invalid utf-8".into()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn vector(&mut self) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.f64s()?))
    }
    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows.checked_mul(cols).ok_or_else(|| Error::CorruptFile("matrix size overflow".into()))?;
        if n.checked_mul(8).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(Error::CorruptFile("matrix exceeds section".into()));
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_vec(rows, cols, data))
    }
}

fn encode_bank(bank: &FeatureBank) -> Vec<u8> {
    let mut w = Writer::default();
    w.u64(bank.patch_h as u64);
    w.u64(bank.patch_w as u64);
    let h = &bank.hyper;
    w.f64(h.rho);
    w.f64(h.beta);
    w.f64(h.lambda);
    w.u64(h.iterations as u64);
    w.u64(h.seed);
    w.u64(h.history as u64);
    w.u8(match h.sparsity_target {
        SparsityTarget::Activation => 0,
        SparsityTarget::SquaredActivation => 1,
    });
    w.u8(match bank.stop {
        StopReason::GradientTolerance => 0,
        StopReason::MaxIterations => 1,
        StopReason::LineSearchFailure => 2,
    });
    w.f64s(&bank.cost_trace);
    let wt = &bank.whitening;
    w.u8(match wt.mode {
        WhiteningMode::Pca => 0,
        WhiteningMode::Zca => 1,
    });
    w.f64(wt.epsilon);
    w.f64(wt.variance_kept);
    w.u64(wt.retained_k as u64);
    w.f64s(wt.mean.as_slice());
    w.matrix(&wt.basis);
    let p = &bank.params;
    w.matrix(&p.w1);
    w.f64s(p.b1.as_slice());
    w.matrix(&p.w2);
    w.f64s(p.b2.as_slice());
    w.0
}

fn decode_bank(r: &mut Reader) -> Result<FeatureBank> {
    let patch_h = r.usize()?;
    let patch_w = r.usize()?;
    let hyper = Hyperparams {
        rho: r.f64()?,
        beta: r.f64()?,
        lambda: r.f64()?,
        iterations: r.usize()?,
        seed: r.u64()?,
        history: r.usize()?,
        sparsity_target: match r.u8()? {
            0 => SparsityTarget::Activation,
            1 => SparsityTarget::SquaredActivation,
            _ => return Err(Error::CorruptFile("unknown sparsity target".into())),
        },
    };
    let stop = match r.u8()? {
        0 => StopReason::GradientTolerance,
        1 => StopReason::MaxIterations,
        2 => StopReason::LineSearchFailure,
        _ => return Err(Error::CorruptFile("unknown stop reason".into())),
    };
    let cost_trace = r.f64s()?;
    let mode = match r.u8()? {
        0 => WhiteningMode::Pca,
        1 => WhiteningMode::Zca,
        _ => return Err(Error::CorruptFile("unknown whitening mode".into())),
    };
    let epsilon = r.f64()?;
    let variance_kept = r.f64()?;
    let retained_k = r.usize()?;
    let mean = r.vector()?;
    let basis = r.matrix()?;
    let w1 = r.matrix()?;
    let b1 = r.vector()?;
    let w2 = r.matrix()?;
    let b2 = r.vector()?;
    let (h, k) = w1.shape();
    if w2.shape() != (k, h) || b1.len() != h || b2.len() != k || basis.shape() != (retained_k, mean.len()) {
        return Err(Error::CorruptFile("inconsistent bank shapes".into()));
    }
    let bank = FeatureBank {
        params: AutoencoderParams { w1, b1, w2, b2 },
        whitening: WhiteningTransform { mean, basis, epsilon, mode, retained_k, variance_kept },
        hyper,
        patch_h,
        patch_w,
        cost_trace,
        stop,
    };
    bank.validate().map_err(|e| Error::CorruptFile(e.to_string()))?;
    Ok(bank)
}

fn encode_user(m: &UserModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.str(&m.user_id);
    w.f64(m.reg);
    match m.threshold {
        Some(t) => {
            w.u8(1);
            w.f64(t);
        }
        None => w.u8(0),
    }
    w.u64(m.train_count as u64);
    w.f64s(m.mean.as_slice());
    match &m.covariance {
        CovarianceFactor::Dense { lower } => {
            w.u8(0);
            w.matrix(lower);
        }
        CovarianceFactor::LowRank { basis, spectrum, ridge } => {
            w.u8(1);
            w.matrix(basis);
            w.f64s(spectrum);
            w.f64(*ridge);
        }
    }
    w.0
}

fn decode_user(r: &mut Reader) -> Result<UserModel> {
    let user_id = r.str()?;
    let reg = r.f64()?;
    let threshold = match r.u8()? {
        0 => None,
        1 => Some(r.f64()?),
        _ => return Err(Error::CorruptFile("bad threshold flag".into())),
    };
    let train_count = r.usize()?;
    let mean = r.vector()?;
    let d = mean.len();
    let covariance = match r.u8()? {
        0 => {
            let lower = r.matrix()?;
            if lower.shape() != (d, d) {
                return Err(Error::CorruptFile("covariance factor shape".into()));
            }
            CovarianceFactor::Dense { lower }
        }
        1 => {
            let basis = r.matrix()?;
            let spectrum = r.f64s()?;
            let ridge = r.f64()?;
            if basis.nrows() != d || basis.ncols() != spectrum.len() {
                return Err(Error::CorruptFile("covariance factor shape".into()));
            }
            CovarianceFactor::LowRank { basis, spectrum, ridge }
        }
        _ => return Err(Error::CorruptFile("unknown covariance form".into())),
    };
    if !(covariance.min_diagonal() > 0.0) {
        return Err(Error::CorruptFile(format!("covariance of user {user_id} is not positive definite")));
    }
    Ok(UserModel { user_id, mean, covariance, reg, threshold, train_count })
}
