use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::metrics::{auc, eer, roc_curve, RocCurve, ScorePools};
use crate::error::{Error, Result};
use crate::exec::{stream, Exec};
use crate::featurelearn::{learn_features, FeatureBank, LearnConfig};
use crate::features::{Encoder, DEFAULT_POOL};
use crate::preprocess::{preprocess_pipeline, PreprocessConfig, SignatureImage};
use crate::signature_io::Dataset;
use crate::verify::{enroll, score, VerifyConfig};

pub const REPORT_SCHEMA_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryKind {
    Skilled,
    Random,
}

impl FromStr for ForgeryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skilled" => Ok(ForgeryKind::Skilled),
            "random" => Ok(ForgeryKind::Random),
            _ => Err(Error::Config(format!("protocol must be skilled or random, got {s:?}"))),
        }
    }
}

impl fmt::Display for ForgeryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForgeryKind::Skilled => "skilled",
            ForgeryKind::Random => "random",
        })
    }
}

/// Which figure the report headline `eer`/`auc` carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Per-user curves, metrics averaged over users.
    UserMean,
    /// One curve over all users' scores.
    Pooled,
}

impl FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user_mean" => Ok(Aggregation::UserMean),
            "pooled" => Ok(Aggregation::Pooled),
            _ => Err(Error::Config(format!("aggregation must be user_mean or pooled, got {s:?}"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::UserMean => "user_mean",
            Aggregation::Pooled => "pooled",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub forgery_kind: ForgeryKind,
    /// Enroll on one fold, test on the rest. `1` switches to a single split
    /// of `train_fraction`.
    pub folds: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Random forgeries drawn per impostor user.
    pub random_cap: usize,
    pub aggregation: Aggregation,
    pub verify: VerifyConfig,
    pub pool_rows: usize,
    pub pool_cols: usize,
    pub preprocess: PreprocessConfig,
    pub emit_roc: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            forgery_kind: ForgeryKind::Skilled,
            folds: 4,
            train_fraction: 0.25,
            seed: 0,
            random_cap: 20,
            aggregation: Aggregation::UserMean,
            verify: VerifyConfig::default(),
            pool_rows: DEFAULT_POOL,
            pool_cols: DEFAULT_POOL,
            preprocess: PreprocessConfig::default(),
            emit_roc: false,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!("train_fraction must lie in (0, 1], got {}", self.train_fraction)));
        }
        if self.random_cap == 0 {
            return Err(Error::Config("random_cap must be at least 1".into()));
        }
        if self.pool_rows == 0 || self.pool_cols == 0 {
            return Err(Error::Config("pool grid must be at least 1x1".into()));
        }
        self.verify.validate()?;
        self.preprocess.validate()
    }
}

/// Pooled descriptors of every signature, grouped like the dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserFeatures {
    pub genuine: Vec<Vec<f64>>,
    pub forgeries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub users: BTreeMap<String, UserFeatures>,
}

/// Preprocesses and encodes every signature of `dataset`.
pub fn featurize(dataset: &Dataset, bank: &FeatureBank, cfg: &ProtocolConfig, exec: Exec) -> Result<FeatureSet> {
    let enc = Encoder::new(bank)?;
    let jobs: Vec<_> = dataset
        .users
        .iter()
        .flat_map(|(user, sigs)| {
            let g = sigs.genuine.iter().map(move |s| (user, true, s));
            g.chain(sigs.forgeries.iter().map(move |s| (user, false, s)))
        })
        .collect();
    let vectors = exec.map_slice(&jobs, |(user, _, sig)| {
        preprocess_pipeline(sig, &cfg.preprocess)
            .and_then(|img| enc.extract(&img, cfg.pool_rows, cfg.pool_cols))
            .map(|v| v.values)
            .map_err(|e| e.in_file(&sig.source_path).for_user(user))
    });
    let mut set = FeatureSet::default();
    for ((user, genuine, _), v) in jobs.iter().zip(vectors) {
        let entry = set.users.entry(user.to_string()).or_default();
        if *genuine {
            entry.genuine.push(v?);
        } else {
            entry.forgeries.push(v?);
        }
    }
    Ok(set)
}

/// Seeded enrollment/test split of `n` genuine signatures: `train_fraction`
/// of them (rounded, at least 2) enroll.
pub fn training_split(user: &str, n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InsufficientGenuine { user: user.to_string(), have: n, need: 2 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, "split", user));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(2, n);
    let test = order.split_off(n_train);
    Ok((order, test))
}

/// Seeded assignment of `n` genuine signatures to `k` folds of near-equal
/// size.
pub fn fold_assignment(user: &str, n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, "folds", user));
    let mut folds = vec![Vec::new(); k];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % k].push(idx);
    }
    folds
}

/// Other users' genuine signatures, at most `cap` per impostor.
fn random_forgeries<'a>(features: &'a FeatureSet, user: &str, cap: usize, seed: u64) -> Vec<&'a [f64]> {
    let mut out = Vec::new();
    for (other, feats) in &features.users {
        if other == user {
            continue;
        }
        let n = feats.genuine.len();
        let mut picked = index::sample(&mut stream(seed, "random-forgery", &format!("{user}/{other}")), n, cap.min(n)).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| feats.genuine[i].as_slice()));
    }
    out
}

/// Accumulated genuine and forgery distances for one user over all rounds.
pub fn user_pools(features: &FeatureSet, user: &str, cfg: &ProtocolConfig) -> Result<ScorePools> {
    let feats = features.users.get(user).ok_or_else(|| Error::UnknownUser(user.to_string()))?;
    let n = feats.genuine.len();
    let rounds: Vec<(Vec<usize>, Vec<usize>)> = if cfg.folds >= 2 {
        if n < 2 * cfg.folds {
            return Err(Error::InsufficientGenuine { user: user.to_string(), have: n, need: 2 * cfg.folds });
        }
        let folds = fold_assignment(user, n, cfg.folds, cfg.seed);
        (0..cfg.folds)
            .map(|f| {
                let test = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
                (folds[f].clone(), test)
            })
            .collect()
    } else {
        vec![training_split(user, n, cfg.train_fraction, cfg.seed)?]
    };
    let forgeries: Vec<&[f64]> = match cfg.forgery_kind {
        ForgeryKind::Skilled => feats.forgeries.iter().map(Vec::as_slice).collect(),
        ForgeryKind::Random => random_forgeries(features, user, cfg.random_cap, cfg.seed),
    };

    let mut pools = ScorePools::new(user);
    for (train, test) in rounds {
        let enrol: Vec<&[f64]> = train.iter().map(|&i| feats.genuine[i].as_slice()).collect();
        let model = enroll(user, &enrol, &cfg.verify)?;
        for &i in &test {
            pools.genuine.push(score(&model, &feats.genuine[i])?);
        }
        for f in &forgeries {
            pools.forgery.push(score(&model, f)?);
        }
    }
    Ok(pools)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserResult {
    pub user_id: String,
    pub eer: f64,
    pub auc: f64,
    pub genuine_scores: usize,
    pub forgery_scores: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolBlock {
    pub forgery_kind: ForgeryKind,
    pub folds: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub random_cap: usize,
    pub aggregation: Aggregation,
    /// Effective run configuration as `key=value` lines.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Per `aggregation`.
    pub eer: f64,
    pub auc: f64,
    pub mean_eer: f64,
    pub mean_auc: f64,
    pub pooled_eer: f64,
    pub pooled_auc: f64,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u16,
    pub protocol: ProtocolBlock,
    pub per_user: Vec<UserResult>,
    pub aggregate: Aggregate,
    pub notes: Vec<String>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::VersionMismatch { found: report.schema_version, expected: REPORT_SCHEMA_VERSION });
        }
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.aggregate;
        let metrics = self.per_user.iter().flat_map(|u| [u.eer, u.auc]);
        let all = metrics.chain([a.eer, a.auc, a.mean_eer, a.mean_auc, a.pooled_eer, a.pooled_auc]);
        for v in all {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("report metric {v} outside [0, 1]")));
            }
        }
        if a.users != self.per_user.len() || self.per_user.is_empty() {
            return Err(Error::Config("report user count does not match per-user entries".into()));
        }
        Ok(())
    }
}

/// Runs the protocol on precomputed descriptors.
pub fn evaluate_features(features: &FeatureSet, cfg: &ProtocolConfig, exec: Exec) -> Result<EvaluationReport> {
    cfg.validate()?;
    if features.users.is_empty() {
        return Err(Error::Config("no users to evaluate".into()));
    }
    let users: Vec<&String> = features.users.keys().collect();
    let pools = exec.map_slice(&users, |u| user_pools(features, u, cfg).map_err(|e| e.for_user(u)));
    let pools = pools.into_iter().collect::<Result<Vec<_>>>()?;

    let mut per_user = Vec::with_capacity(pools.len());
    let mut pooled = ScorePools::new("*");
    for p in &pools {
        let curve = roc_curve(p).map_err(|e| e.for_user(&p.user_id))?;
        per_user.push(UserResult {
            user_id: p.user_id.clone(),
            eer: eer(&curve),
            auc: auc(&curve),
            genuine_scores: p.genuine.len(),
            forgery_scores: p.forgery.len(),
            roc: cfg.emit_roc.then_some(curve),
        });
        pooled.genuine.extend(&p.genuine);
        pooled.forgery.extend(&p.forgery);
    }
    let n = per_user.len() as f64;
    let mean_eer = per_user.iter().map(|u| u.eer).sum::<f64>() / n;
    let mean_auc = per_user.iter().map(|u| u.auc).sum::<f64>() / n;
    let pooled_curve = roc_curve(&pooled)?;
    let (pooled_eer, pooled_auc) = (eer(&pooled_curve), auc(&pooled_curve));
    let (headline_eer, headline_auc) = match cfg.aggregation {
        Aggregation::UserMean => (mean_eer, mean_auc),
        Aggregation::Pooled => (pooled_eer, pooled_auc),
    };
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        protocol: ProtocolBlock {
            forgery_kind: cfg.forgery_kind,
            folds: cfg.folds,
            train_fraction: if cfg.folds >= 2 { 1.0 / cfg.folds as f64 } else { cfg.train_fraction },
            seed: cfg.seed,
            random_cap: cfg.random_cap,
            aggregation: cfg.aggregation,
            config: None,
        },
        per_user,
        aggregate: Aggregate {
            eer: headline_eer,
            auc: headline_auc,
            mean_eer,
            mean_auc,
            pooled_eer,
            pooled_auc,
            users: pools.len(),
        },
        notes: vec![
            "eer/auc follow `aggregation`; whether published tables average per user or pool all scores is unstated, so both are reported".into(),
            "eer interpolates linearly between the operating points where far - frr changes sign".into(),
        ],
    })
}

/// Featurizes `dataset` with `bank`, then runs the protocol.
pub fn run_protocol(dataset: &Dataset, bank: &FeatureBank, cfg: &ProtocolConfig, exec: Exec) -> Result<EvaluationReport> {
    cfg.validate()?;
    evaluate_features(&featurize(dataset, bank, cfg, exec)?, cfg, exec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hidden: usize,
    pub iterations: usize,
    pub eer: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub schema_version: u16,
    pub hidden: Vec<usize>,
    pub iterations: Vec<usize>,
    /// Row-major over `hidden × iterations`.
    pub cells: Vec<GridCell>,
}

impl GridReport {
    pub fn cell(&self, hidden: usize, iterations: usize) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.hidden == hidden && c.iterations == iterations)
    }

    /// Adjacent iteration columns (per hidden row) where EER does not rise,
    /// out of all such pairs.
    pub fn nonincreasing_pairs(&self) -> (usize, usize) {
        let mut ok = 0;
        let mut total = 0;
        for row in self.cells.chunks(self.iterations.len()) {
            for w in row.windows(2) {
                total += 1;
                if w[1].eer <= w[0].eer {
                    ok += 1;
                }
            }
        }
        (ok, total)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Plain-text tables, EER then AUC, hidden sizes down and iteration
    /// counts across.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (title, pick) in [("EER (%)", 0), ("AUC (%)", 1)] {
            out.push_str(&format!("{title:>10}"));
            for it in &self.iterations {
                out.push_str(&format!("{it:>9}"));
            }
            out.push('\n');
            for row in self.cells.chunks(self.iterations.len()) {
                out.push_str(&format!("{:>10}", row[0].hidden));
                for c in row {
                    out.push_str(&format!("{:>9.2}", 100.0 * if pick == 0 { c.eer } else { c.auc }));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Retrains the bank for every `(hidden, iterations)` cell and reruns the
/// protocol. Patches come from `corpus`.
pub fn hyperparameter_grid(
    dataset: &Dataset,
    corpus: &[SignatureImage],
    hidden: &[usize],
    iterations: &[usize],
    learn: &LearnConfig,
    cfg: &ProtocolConfig,
    exec: Exec,
) -> Result<GridReport> {
    if hidden.is_empty() || iterations.is_empty() {
        return Err(Error::Config("grid needs at least one hidden size and one iteration count".into()));
    }
    let mut cells = Vec::with_capacity(hidden.len() * iterations.len());
    for &h in hidden {
        for &it in iterations {
            let lc = LearnConfig { hidden: h, hyper: crate::featurelearn::Hyperparams { iterations: it, ..learn.hyper }, ..*learn };
            let bank = learn_features(corpus, &lc, exec)?;
            let report = run_protocol(dataset, &bank, cfg, exec)?;
            log::info!("grid hidden={h} iterations={it}: eer {:.4} auc {:.4}", report.aggregate.eer, report.aggregate.auc);
            cells.push(GridCell { hidden: h, iterations: it, eer: report.aggregate.eer, auc: report.aggregate.auc });
        }
    }
    Ok(GridReport { schema_version: REPORT_SCHEMA_VERSION, hidden: hidden.to_vec(), iterations: iterations.to_vec(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Users are Gaussian clouds around distinct centres; forgeries sit
    /// between the user's centre and a neighbour's.
    fn synthetic_features(users: usize, genuine: usize, forgeries: usize, dim: usize, seed: u64) -> FeatureSet {
        let mut set = FeatureSet::default();
        for u in 0..users {
            let mut rng = stream(seed, "synthetic-features", &u.to_string());
            let centre: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut draw = |offset: f64| -> Vec<f64> {
                centre.iter().map(|c| c + offset + 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
            };
            let g = (0..genuine).map(|_| draw(0.0)).collect();
            let f = (0..forgeries).map(|_| draw(1.5)).collect();
            set.users.insert(format!("{:03}", u + 1), UserFeatures { genuine: g, forgeries: f });
        }
        set
    }

    #[test]
    fn folds_partition_the_genuine_set() {
        let folds = fold_assignment("7", 18, 4, 3);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..18).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 4 || f.len() == 5));
        assert_eq!(folds, fold_assignment("7", 18, 4, 3));
        assert_ne!(folds, fold_assignment("8", 18, 4, 3));
    }

    #[test]
    fn single_split_sizes() {
        let (train, test) = training_split("u", 20, 0.25, 1).unwrap();
        assert_eq!((train.len(), test.len()), (5, 15));
        let (train, test) = training_split("u", 20, 1.0, 1).unwrap();
        assert_eq!((train.len(), test.len()), (20, 0));
        let (train, _) = training_split("u", 4, 0.1, 1).unwrap();
        assert_eq!(train.len(), 2);
        assert!(matches!(training_split("u", 1, 0.5, 1), Err(Error::InsufficientGenuine { .. })));
    }

    #[test]
    fn separable_users_score_well_and_reproducibly() {
        let set = synthetic_features(5, 16, 16, 6, 1);
        let cfg = ProtocolConfig::default();
        let a = evaluate_features(&set, &cfg, Exec::Parallel).unwrap();
        let b = evaluate_features(&set, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        a.validate().unwrap();
        assert!(a.aggregate.mean_eer < 0.1 && a.aggregate.mean_auc > 0.95, "{:?}", a.aggregate);
        // 4 rounds, 12 genuine tests and 16 forgeries each
        assert!(a.per_user.iter().all(|u| u.genuine_scores == 48 && u.forgery_scores == 64));
        assert_eq!(EvaluationReport::from_json(&a.to_json().unwrap()).unwrap(), a);
    }

    #[test]
    fn per_user_metrics_do_not_depend_on_other_users() {
        let set = synthetic_features(4, 12, 8, 5, 2);
        let cfg = ProtocolConfig::default();
        let full = evaluate_features(&set, &cfg, Exec::Sequential).unwrap();
        let mut subset = set.clone();
        subset.users.remove("002");
        let part = evaluate_features(&subset, &cfg, Exec::Sequential).unwrap();
        for u in &part.per_user {
            assert_eq!(Some(u), full.per_user.iter().find(|v| v.user_id == u.user_id));
        }
    }

    #[test]
    fn random_forgeries_are_the_other_users_genuine() {
        let set = synthetic_features(2, 12, 0, 4, 3);
        let cfg = ProtocolConfig { forgery_kind: ForgeryKind::Random, ..Default::default() };
        let pools = user_pools(&set, "001", &cfg).unwrap();
        assert_eq!(pools.forgery.len(), 4 * 12);
        // each round scores exactly user 002's genuine vectors
        let folds = fold_assignment("001", 12, 4, cfg.seed);
        let own = &set.users["001"].genuine;
        for (round, fold) in folds.iter().enumerate() {
            let enrol: Vec<&[f64]> = fold.iter().map(|&i| own[i].as_slice()).collect();
            let model = enroll("001", &enrol, &cfg.verify).unwrap();
            let want: Vec<f64> = set.users["002"].genuine.iter().map(|v| score(&model, v).unwrap()).collect();
            assert_eq!(pools.forgery[round * 12..(round + 1) * 12], want[..]);
        }
        let capped = ProtocolConfig { random_cap: 5, ..cfg.clone() };
        assert_eq!(user_pools(&set, "001", &capped).unwrap().forgery.len(), 4 * 5);
        // skilled protocol has no forgeries to score here
        assert!(evaluate_features(&set, &ProtocolConfig::default(), Exec::Sequential).is_err());
        assert!(evaluate_features(&set, &cfg, Exec::Sequential).is_ok());
    }

    #[test]
    fn too_few_genuine_for_folds() {
        let set = synthetic_features(2, 7, 3, 3, 4);
        let err = evaluate_features(&set, &ProtocolConfig::default(), Exec::Sequential).unwrap_err();
        let Error::User { source, .. } = err else { panic!("{err}") };
        assert!(matches!(*source, Error::InsufficientGenuine { have: 7, need: 8, .. }));
    }

    #[test]
    fn pooled_aggregation_switches_the_headline() {
        let set = synthetic_features(3, 8, 8, 4, 5);
        let cfg = ProtocolConfig { aggregation: Aggregation::Pooled, folds: 1, emit_roc: true, ..Default::default() };
        let r = evaluate_features(&set, &cfg, Exec::Sequential).unwrap();
        assert_eq!((r.aggregate.eer, r.aggregate.auc), (r.aggregate.pooled_eer, r.aggregate.pooled_auc));
        assert!(r.per_user.iter().all(|u| u.roc.is_some() && u.genuine_scores == 6));
    }
}
