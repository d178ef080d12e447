use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("image has constant intensity; no threshold exists")]
    DegenerateImage,
    #[error("empty input")]
    EmptyInput,
    #[error("dataset root is missing class directory `{0}`")]
    MissingClassDir(String),
    #[error("all {0} image files failed extraction")]
    AllFilesFailed(usize),
    #[error("table contains a single class")]
    SingleClassTable,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("column `{0}` is constant")]
    ConstantColumn(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("labels must be 0 or 1")]
    NonBinaryLabels,
    #[error("optimizer diverged: {0}")]
    Diverged(String),
    #[error("n_neighbors = {k} exceeds training size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("search space is empty")]
    EmptySpace,
    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used for CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Decode { .. } => "DecodeError",
            Error::DegenerateImage => "DegenerateImage",
            Error::EmptyInput => "EmptyInput",
            Error::MissingClassDir(_) => "MissingClassDir",
            Error::AllFilesFailed(_) => "AllFilesFailed",
            Error::SingleClassTable => "SingleClassTable",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::ConstantColumn(_) => "ConstantColumn",
            Error::Schema(_) => "SchemaError",
            Error::NonBinaryLabels => "NonBinaryLabels",
            Error::Diverged(_) => "Diverged",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::EmptySpace => "EmptySpace",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::CorruptModel(_) => "CorruptModel",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Fold { source, .. } => source.kind(),
        }
    }
}
