//! Command-line front end.
//!
//! Exit codes: 0 success or ACCEPT, 3 REJECT, 1 runtime failure, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{RunConfig, KEYS};
use crate::error::{Error, Result};
use crate::eval::{hyperparameter_grid, run_protocol, training_split};
use crate::featurelearn::learn_features;
use crate::features::Encoder;
use crate::preprocess::{preprocess_all, preprocess_pipeline};
use crate::signature_io::{
    load_dataset, load_model, parse_signature, save_model, write_synthetic_dataset, Dataset, ModelFile,
    SyntheticDatasetSpec,
};
use crate::verify::{enroll, verify};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REJECT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "sigverify", version, about = "Online signature verification with self-taught sparse-autoencoder features")]
struct Cli {
    /// Flat key=value config file; command-line key flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a feature bank on an unlabeled signature corpus.
    LearnFeatures(LearnArgs),
    /// Fit and calibrate one user's model from a seeded share of their
    /// genuine signatures.
    Enroll(EnrollArgs),
    /// Accept or reject one signature file against a user's model.
    Verify(VerifyArgs),
    /// Run the evaluation protocol (or a hidden-size x iteration grid).
    Evaluate(EvaluateArgs),
    /// Write a synthetic SVC2004-layout dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EnrollArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    user: String,
    /// Models file; an existing file is updated in place.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    user: String,
    #[arg(long)]
    signature: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Not needed with --grid, which trains its own banks.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Include per-user ROC points in the report.
    #[arg(long)]
    emit_roc: bool,
    /// `HIDDEN,...:ITERS,...`, e.g. `25,100:50,100,200`.
    #[arg(long)]
    grid: Option<String>,
    /// Unlabeled corpus for grid retraining (defaults to --dataset).
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long, default_value_t = 16)]
    genuine: usize,
    #[arg(long, default_value_t = 16)]
    forgeries: usize,
    #[arg(long, default_value_t = 0.05)]
    jitter: f64,
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for key in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .action(ArgAction::Set)
                .global(true)
                .help_heading("Config keys")
                .help(format!("config key {key}")),
        );
    }
    cmd
}

/// Innermost matches, where global flags are visible.
fn leaf(m: &ArgMatches) -> &ArgMatches {
    match m.subcommand() {
        Some((_, sub)) => leaf(sub),
        None => m,
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidLayout(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

fn build_config(cli: &Cli, m: &ArgMatches) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        if !path.is_file() {
            return Err(Failure::Usage(format!("--config: file not found: {}", path.display())));
        }
        cfg.apply_file(path)?;
    }
    for key in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v).map_err(|e| Failure::Usage(format!("--{}: {e}", flag_name(key))))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_dir(flag: &str, path: &Path) -> std::result::Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{flag}: directory not found: {}", path.display())))
    }
}

fn require_file(flag: &str, path: &Path) -> std::result::Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{flag}: file not found: {}", path.display())))
    }
}

fn load(root: &Path, cfg: &RunConfig) -> Result<Dataset> {
    let outcome = load_dataset(root, &cfg.layout, cfg.fail_fast, cfg.exec())?;
    if !outcome.failures.is_empty() {
        eprintln!("warning: {} files failed to parse and were skipped", outcome.failures.len());
    }
    Ok(outcome.dataset)
}

fn load_bank(path: &Path) -> Result<crate::featurelearn::FeatureBank> {
    load_model(path)?
        .bank
        .ok_or_else(|| Error::CorruptFile(format!("{} holds no feature bank", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    if cli.verbose {
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    } else {
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    }
    match dispatch(&cli, leaf(&matches), out) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprint!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprint!(": {s}");
                source = s.source();
            }
            eprintln!();
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cli: &Cli, m: &ArgMatches, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let cfg = build_config(cli, m)?;
    let exec = cfg.exec();
    if let Command::Synth(a) = &cli.command {
        let spec = SyntheticDatasetSpec { users: a.users, genuine: a.genuine, forgeries: a.forgeries, jitter: a.jitter, seed: cfg.seed };
        if spec.users == 0 || spec.genuine == 0 || !(spec.jitter >= 0.0) {
            return Err(Failure::Usage("synth needs users, genuine > 0 and jitter >= 0".into()));
        }
        write_synthetic_dataset(&a.out, &spec)?;
        let _ = writeln!(out, "wrote {} users to {} (genuine_per_user={} forgery_per_user={})", spec.users, a.out.display(), spec.genuine, spec.forgeries);
        return Ok(EXIT_OK);
    }
    match &cli.command {
        Command::LearnFeatures(a) => {
            require_dir("corpus", &a.corpus)?;
            let corpus = load(&a.corpus, &cfg)?;
            let images = preprocess_all(corpus.all_signatures(), &cfg.protocol.preprocess, exec)?;
            let bank = learn_features(&images, &cfg.learn_config(), exec)?;
            let file = ModelFile { config: cfg.to_text(), bank: Some(bank), models: vec![] };
            save_model(&a.out, &file)?;
            let bank = file.bank.as_ref().unwrap();
            let _ = writeln!(
                out,
                "trained {} features on {} images: {} iterations, cost {:.6} -> {:.6} ({:?})",
                bank.hidden_size(),
                images.len(),
                bank.cost_trace.len() - 1,
                bank.cost_trace[0],
                bank.cost_trace.last().unwrap(),
                bank.stop
            );
            Ok(EXIT_OK)
        }
        Command::Enroll(a) => {
            require_file("bank", &a.bank)?;
            require_dir("dataset", &a.dataset)?;
            let bank = load_bank(&a.bank)?;
            let dataset = load(&a.dataset, &cfg)?;
            let sigs = dataset.users.get(&a.user).ok_or_else(|| Error::UnknownUser(a.user.clone()))?;
            let p = cfg.protocol_config();
            let (train, test) = training_split(&a.user, sigs.genuine.len(), p.train_fraction, p.seed)?;
            let chosen: Vec<_> = train.iter().map(|&i| &sigs.genuine[i]).collect();
            let images = preprocess_all(chosen, &p.preprocess, exec)?;
            let enc = Encoder::new(&bank)?;
            let vectors = images.iter().map(|img| enc.extract(img, p.pool_rows, p.pool_cols)).collect::<Result<Vec<_>>>()?;
            let model = enroll(&a.user, &vectors, &p.verify)?;

            let mut file = if a.out.exists() {
                load_model(&a.out)?
            } else {
                ModelFile { config: String::new(), bank: None, models: vec![] }
            };
            file.config = cfg.to_text();
            file.models.retain(|m| m.user_id != a.user);
            file.models.push(model);
            file.models.sort_by(|x, y| x.user_id.cmp(&y.user_id));
            save_model(&a.out, &file)?;
            let m = file.model(&a.user).unwrap();
            let _ = writeln!(out, "enrolled user {} from {} genuine signatures, threshold={}", a.user, m.train_count, m.threshold.unwrap());
            if !test.is_empty() {
                let _ = writeln!(out, "{} genuine signatures held out", test.len());
            }
            Ok(EXIT_OK)
        }
        Command::Verify(a) => {
            require_file("bank", &a.bank)?;
            require_file("models", &a.models)?;
            require_file("signature", &a.signature)?;
            let bank = load_bank(&a.bank)?;
            let models = load_model(&a.models)?;
            let model = models.model(&a.user).ok_or_else(|| Error::UnknownUser(a.user.clone()))?;
            let bytes = std::fs::read(&a.signature).map_err(|e| Error::io(&a.signature, e))?;
            let sig = parse_signature(&bytes, &cfg.layout).map_err(|e| e.in_file(&a.signature))?;
            let p = &cfg.protocol;
            let img = preprocess_pipeline(&sig, &p.preprocess).map_err(|e| e.in_file(&a.signature))?;
            let v = Encoder::new(&bank)?.extract(&img, p.pool_rows, p.pool_cols)?;
            let d = verify(model, &v.values)?;
            let verdict = if d.accepted { "ACCEPT" } else { "REJECT" };
            let _ = writeln!(out, "{verdict} distance={} threshold={}", d.distance, d.threshold);
            Ok(if d.accepted { EXIT_OK } else { EXIT_REJECT })
        }
        Command::Evaluate(a) => {
            require_dir("dataset", &a.dataset)?;
            let dataset = load(&a.dataset, &cfg)?;
            let mut p = cfg.protocol_config();
            p.emit_roc = a.emit_roc;
            if let Some(spec) = &a.grid {
                let (hidden, iters) = parse_grid(spec).map_err(Failure::Usage)?;
                let corpus_dir = a.corpus.as_ref().unwrap_or(&a.dataset);
                require_dir("corpus", corpus_dir)?;
                let corpus = if a.corpus.is_some() { load(corpus_dir, &cfg)? } else { dataset.clone() };
                let images = preprocess_all(corpus.all_signatures(), &p.preprocess, exec)?;
                let grid = hyperparameter_grid(&dataset, &images, &hidden, &iters, &cfg.learn_config(), &p, exec)?;
                write_text(&a.report, &grid.to_json()?)?;
                let _ = write!(out, "{}", grid.to_table());
                return Ok(EXIT_OK);
            }
            let bank_path = a.bank.as_ref().ok_or_else(|| Failure::Usage("--bank is required without --grid".into()))?;
            require_file("bank", bank_path)?;
            let bank = load_bank(bank_path)?;
            let mut report = run_protocol(&dataset, &bank, &p, exec)?;
            report.protocol.config = Some(cfg.to_text());
            write_text(&a.report, &report.to_json()?)?;
            let _ = writeln!(
                out,
                "{} users, {} forgeries: mean EER {:.4}, mean AUC {:.4} (pooled EER {:.4}, AUC {:.4})",
                report.aggregate.users,
                p.forgery_kind,
                report.aggregate.mean_eer,
                report.aggregate.mean_auc,
                report.aggregate.pooled_eer,
                report.aggregate.pooled_auc
            );
            Ok(EXIT_OK)
        }
        Command::Synth(_) => unreachable!(),
    }
}

fn parse_grid(spec: &str) -> std::result::Result<(Vec<usize>, Vec<usize>), String> {
    let list = |s: &str| -> std::result::Result<Vec<usize>, String> {
        s.split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|_| format!("--grid: bad number {v:?}")))
            .filter(|r| !matches!(r, Ok(0)))
            .collect()
    };
    let (h, i) = spec.split_once(':').ok_or("--grid: expected HIDDEN,...:ITERS,...")?;
    let (h, i) = (list(h)?, list(i)?);
    if h.is_empty() || i.is_empty() {
        return Err("--grid: needs at least one hidden size and one iteration count".into());
    }
    Ok((h, i))
}
