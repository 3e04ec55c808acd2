use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // signature parsing and datasets
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} columns, found {found}")]
    FieldCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: unparseable value {value:?}")]
    BadValue { line: usize, value: String },
    #[error("line {line}: timestamp decreases")]
    NonMonotoneTime { line: usize },
    #[error("signature has {0} points, at least 2 required")]
    TooFewPoints(usize),
    #[error("signature has no pen-down point")]
    NoPenDown,
    #[error("negative pressure at line {line}")]
    NegativePressure { line: usize },
    #[error("no signature files matched under {0}")]
    EmptyDataset(PathBuf),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("{count} file(s) failed to parse; first: {first}")]
    ParseFailures { count: usize, first: Box<Error> },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    // model file
    #[error("model file version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    // geometry
    #[error("degenerate geometry: all points coincide")]
    DegenerateGeometry,
    #[error("degenerate extent: constant {0} coordinate")]
    DegenerateExtent(&'static str),

    // feature learning
    #[error("patch {patch_h}x{patch_w} larger than image {height}x{width}")]
    PatchTooLarge { patch_h: usize, patch_w: usize, height: usize, width: usize },
    #[error("patch set is already mean-removed")]
    AlreadyRemoved,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("value {0} outside (0, 1)")]
    DomainError(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("line search failed at iteration {iteration}")]
    LineSearchFailure { iteration: usize },

    // features
    #[error("image {height}x{width} smaller than patch {patch_h}x{patch_w}")]
    ImageTooSmall { patch_h: usize, patch_w: usize, height: usize, width: usize },
    #[error("pool grid {rows}x{cols} finer than feature map {map_h}x{map_w}")]
    PoolTooFine { rows: usize, cols: usize, map_h: usize, map_w: usize },

    // verification
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("empty training set")]
    EmptyTraining,
    #[error("user model has no calibrated threshold")]
    ThresholdUnset,
    #[error("unknown user {0:?}")]
    UnknownUser(String),

    // evaluation
    #[error("empty {0} score pool")]
    EmptyPool(&'static str),
    #[error("user {user} has {have} genuine signatures, protocol needs {need}")]
    InsufficientGenuine { user: String, have: usize, need: usize },
    #[error("user {user}: {source}")]
    User {
        user: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File { path: path.into(), source: Box::new(self) }
    }

    pub(crate) fn for_user(self, user: &str) -> Self {
        Error::User { user: user.to_string(), source: Box::new(self) }
    }
}
