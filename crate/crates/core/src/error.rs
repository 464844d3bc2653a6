use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("failed to encode raster: {0}")]
    Encode(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("unknown label {value} for dataset {dataset}")]
    UnknownLabel { dataset: String, value: u8 },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid transform spec: {0}")]
    InvalidSpec(String),

    #[error("image {width}x{height} is smaller than required {min_width}x{min_height}")]
    TooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("composite recipe violates the lung size constraint: ratio {ratio:.4} outside 1 +/- {tolerance}")]
    SizeConstraint { ratio: f64, tolerance: f64 },

    #[error("degenerate composite: no lesion pixel survives clipping")]
    DegenerateComposite,

    #[error("no matchable healthy/lesion pair after {retries} redraws")]
    RetryBudgetExhausted { retries: usize },

    #[error("degenerate: identical scores")]
    IdenticalScores,

    #[error("non-binary mask: found value {0}")]
    NonBinaryMask(u8),

    #[error("non-finite result: {0}")]
    NonFinite(String),

    #[error("manifest error at line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
