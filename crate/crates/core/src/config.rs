//! Flat `key=value` run configuration shared by every command.
//!
//! Sources layer as defaults, then a config file, then command-line
//! overrides. [`RunConfig::to_text`] renders the effective values in a fixed
//! key order; that text is embedded in every artifact.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{Aggregation, ForgeryKind, ProtocolConfig};
use crate::exec::Exec;
use crate::featurelearn::{LearnConfig, SparsityTarget, WhiteningMode};
use crate::signature_io::{Column, DatasetLayout, FormatPreset};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub learn: LearnConfig,
    /// Also carries preprocessing, pooling and classifier settings.
    pub protocol: ProtocolConfig,
    pub layout: DatasetLayout,
    pub seed: u64,
    pub parallel: bool,
    pub fail_fast: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            learn: LearnConfig::default(),
            protocol: ProtocolConfig::default(),
            layout: DatasetLayout::svc2004(),
            seed: 0,
            parallel: true,
            fail_fast: false,
        }
    }
}

/// Every recognized key, in rendering order.
pub const KEYS: &[&str] = &[
    "seed",
    "parallel",
    "raster_width",
    "raster_height",
    "smooth",
    "smooth_factor",
    "rotate",
    "normalize",
    "patch_h",
    "patch_w",
    "n_patches",
    "hidden",
    "iters",
    "rho",
    "beta",
    "lambda",
    "history",
    "sparsity_target",
    "whiten_mode",
    "whiten_eps",
    "variance_keep",
    "pool_rows",
    "pool_cols",
    "reg",
    "quantile",
    "slack",
    "protocol",
    "folds",
    "train_fraction",
    "random_cap",
    "aggregation",
    "format",
    "column_map",
    "count_header",
    "filename_rule",
    "genuine_per_user",
    "forgery_per_user",
    "fail_fast",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}, expected true or false"))),
    }
}

fn column_name(c: Column) -> &'static str {
    match c {
        Column::X => "x",
        Column::Y => "y",
        Column::T => "t",
        Column::PenDown => "pen_down",
        Column::Pressure => "pressure",
        Column::Azimuth => "azimuth",
        Column::Altitude => "altitude",
        Column::Skip => "skip",
    }
}

impl RunConfig {
    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    /// Learning settings with the run seed applied.
    pub fn learn_config(&self) -> LearnConfig {
        let mut l = self.learn;
        l.hyper.seed = self.seed;
        l
    }

    /// Protocol settings with the run seed applied.
    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig { seed: self.seed, ..self.protocol.clone() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let l = &mut self.learn;
        let p = &mut self.protocol;
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "parallel" => self.parallel = parse_bool(key, v)?,
            "raster_width" => p.preprocess.raster_width = parse(key, v)?,
            "raster_height" => p.preprocess.raster_height = parse(key, v)?,
            "smooth" => p.preprocess.smooth = parse_bool(key, v)?,
            "smooth_factor" => p.preprocess.smooth_factor = parse(key, v)?,
            "rotate" => p.preprocess.rotate = parse_bool(key, v)?,
            "normalize" => p.preprocess.normalize = parse_bool(key, v)?,
            "patch_h" => l.patch_h = parse(key, v)?,
            "patch_w" => l.patch_w = parse(key, v)?,
            "n_patches" => l.n_patches = parse(key, v)?,
            "hidden" => l.hidden = parse(key, v)?,
            "iters" => l.hyper.iterations = parse(key, v)?,
            "rho" => l.hyper.rho = parse(key, v)?,
            "beta" => l.hyper.beta = parse(key, v)?,
            "lambda" => l.hyper.lambda = parse(key, v)?,
            "history" => l.hyper.history = parse(key, v)?,
            "sparsity_target" => {
                l.hyper.sparsity_target = match v {
                    "activation" => SparsityTarget::Activation,
                    "squared_activation" => SparsityTarget::SquaredActivation,
                    _ => return Err(Error::Config(format!("sparsity_target must be activation or squared_activation, got {v:?}"))),
                }
            }
            "whiten_mode" => {
                l.whitening.mode = match v {
                    "pca" => WhiteningMode::Pca,
                    "zca" => WhiteningMode::Zca,
                    _ => return Err(Error::Config(format!("whiten_mode must be pca or zca, got {v:?}"))),
                }
            }
            "whiten_eps" => l.whitening.epsilon = parse(key, v)?,
            "variance_keep" => l.whitening.variance_to_keep = parse(key, v)?,
            "pool_rows" => p.pool_rows = parse(key, v)?,
            "pool_cols" => p.pool_cols = parse(key, v)?,
            "reg" => p.verify.reg = parse(key, v)?,
            "quantile" => p.verify.quantile = parse(key, v)?,
            "slack" => p.verify.slack = parse(key, v)?,
            "protocol" => p.forgery_kind = ForgeryKind::from_str(v)?,
            "folds" => p.folds = parse(key, v)?,
            "train_fraction" => p.train_fraction = parse(key, v)?,
            "random_cap" => p.random_cap = parse(key, v)?,
            "aggregation" => p.aggregation = Aggregation::from_str(v)?,
            "format" => {
                self.layout.format = match v {
                    "svc2004" => FormatPreset::Svc2004,
                    "column_mapped" => FormatPreset::ColumnMapped,
                    _ => return Err(Error::Config(format!("format must be svc2004 or column_mapped, got {v:?}"))),
                }
            }
            "column_map" => {
                self.layout.column_map = v
                    .split(',')
                    .map(Column::from_str)
                    .collect::<Result<_>>()
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            "count_header" => self.layout.count_header = parse_bool(key, v)?,
            "filename_rule" => self.layout.filename_rule = v.to_string(),
            "genuine_per_user" => self.layout.genuine_per_user = parse(key, v)?,
            "forgery_per_user" => self.layout.forgery_per_user = parse(key, v)?,
            "fail_fast" => self.fail_fast = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let l = &self.learn;
        let p = &self.protocol;
        Some(match key {
            "seed" => self.seed.to_string(),
            "parallel" => self.parallel.to_string(),
            "raster_width" => p.preprocess.raster_width.to_string(),
            "raster_height" => p.preprocess.raster_height.to_string(),
            "smooth" => p.preprocess.smooth.to_string(),
            "smooth_factor" => p.preprocess.smooth_factor.to_string(),
            "rotate" => p.preprocess.rotate.to_string(),
            "normalize" => p.preprocess.normalize.to_string(),
            "patch_h" => l.patch_h.to_string(),
            "patch_w" => l.patch_w.to_string(),
            "n_patches" => l.n_patches.to_string(),
            "hidden" => l.hidden.to_string(),
            "iters" => l.hyper.iterations.to_string(),
            "rho" => l.hyper.rho.to_string(),
            "beta" => l.hyper.beta.to_string(),
            "lambda" => l.hyper.lambda.to_string(),
            "history" => l.hyper.history.to_string(),
            "sparsity_target" => match l.hyper.sparsity_target {
                SparsityTarget::Activation => "activation".into(),
                SparsityTarget::SquaredActivation => "squared_activation".into(),
            },
            "whiten_mode" => match l.whitening.mode {
                WhiteningMode::Pca => "pca".into(),
                WhiteningMode::Zca => "zca".into(),
            },
            "whiten_eps" => l.whitening.epsilon.to_string(),
            "variance_keep" => l.whitening.variance_to_keep.to_string(),
            "pool_rows" => p.pool_rows.to_string(),
            "pool_cols" => p.pool_cols.to_string(),
            "reg" => p.verify.reg.to_string(),
            "quantile" => p.verify.quantile.to_string(),
            "slack" => p.verify.slack.to_string(),
            "protocol" => p.forgery_kind.to_string(),
            "folds" => p.folds.to_string(),
            "train_fraction" => p.train_fraction.to_string(),
            "random_cap" => p.random_cap.to_string(),
            "aggregation" => p.aggregation.to_string(),
            "format" => match self.layout.format {
                FormatPreset::Svc2004 => "svc2004".into(),
                FormatPreset::ColumnMapped => "column_mapped".into(),
            },
            "column_map" => self.layout.column_map.iter().map(|c| column_name(*c)).collect::<Vec<_>>().join(","),
            "count_header" => self.layout.count_header.to_string(),
            "filename_rule" => self.layout.filename_rule.clone(),
            "genuine_per_user" => self.layout.genuine_per_user.to_string(),
            "forgery_per_user" => self.layout.forgery_per_user.to_string(),
            "fail_fast" => self.fail_fast.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            out.push_str(k);
            out.push('=');
            out.push_str(&self.get(k).expect("every listed key renders"));
            out.push('\n');
        }
        out
    }

    /// Checks every module's preconditions.
    pub fn validate(&self) -> Result<()> {
        let l = &self.learn;
        l.hyper.validate()?;
        if l.patch_h == 0 || l.patch_w == 0 {
            return Err(Error::Config("patch_h and patch_w must be positive".into()));
        }
        let p = &self.protocol;
        if l.patch_h > p.preprocess.raster_height || l.patch_w > p.preprocess.raster_width {
            return Err(Error::Config(format!(
                "patch {}x{} does not fit the {}x{} raster",
                l.patch_h, l.patch_w, p.preprocess.raster_height, p.preprocess.raster_width
            )));
        }
        let (out_h, out_w) = (p.preprocess.raster_height - l.patch_h + 1, p.preprocess.raster_width - l.patch_w + 1);
        if p.pool_rows > out_h || p.pool_cols > out_w {
            return Err(Error::Config(format!(
                "pool grid {}x{} finer than the {out_h}x{out_w} feature map",
                p.pool_rows, p.pool_cols
            )));
        }
        if l.n_patches == 0 || l.hidden == 0 {
            return Err(Error::Config("n_patches and hidden must be positive".into()));
        }
        if !(l.whitening.epsilon >= 0.0) || !(l.whitening.variance_to_keep > 0.0 && l.whitening.variance_to_keep <= 1.0) {
            return Err(Error::Config("whiten_eps must be >= 0 and variance_keep in (0, 1]".into()));
        }
        p.validate()?;
        self.layout.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_covers_every_key() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("hidden=64\n# comment\n\nrho = 0.1\nprotocol=random\ncolumn_map=x,y,skip,pressure\nformat=column_mapped\n")
            .unwrap();
        let text = cfg.to_text();
        assert_eq!(text.lines().count(), KEYS.len());
        let mut back = RunConfig::default();
        back.apply_text(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.learn.hidden, 64);
        assert_eq!(cfg.protocol.forgery_kind, ForgeryKind::Random);
    }

    #[test]
    fn later_sources_override_earlier_ones() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("iters=50\nseed=3").unwrap();
        cfg.set("iters", "7").unwrap();
        assert_eq!((cfg.learn.hyper.iterations, cfg.seed), (7, 3));
        assert_eq!(cfg.learn_config().hyper.seed, 3);
        assert_eq!(cfg.protocol_config().seed, 3);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("nope", "1"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("hidden", "many"), Err(Error::Config(_))));
        assert!(matches!(cfg.apply_text("hidden"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("smooth", "maybe"), Err(Error::Config(_))));
        cfg.set("rho", "1.5").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("pool_rows", "60").unwrap();
        assert!(cfg.validate().is_err());
        RunConfig::default().validate().unwrap();
    }
}
