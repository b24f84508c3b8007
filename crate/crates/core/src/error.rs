use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("size {size} is not divisible by r = {ratio}; nearest valid sizes are {below} and {above}")]
    Divisibility { size: usize, ratio: usize, below: usize, above: usize },

    #[error("chunk z-interval [{start}, {end}) is narrower than the minimum width {min}")]
    ChunkTooNarrow { start: i64, end: i64, min: usize },

    #[error("autograd: {0}")]
    Graph(String),

    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: u64, what: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("bad magic in {path}")]
    BadMagic { path: PathBuf },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    Version { path: PathBuf, found: u16, expected: u16 },

    #[error("truncated file {path}")]
    Truncated { path: PathBuf },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("unsupported image {path}: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("config {path}:{line}: {reason}")]
    Config { path: PathBuf, line: usize, reason: String },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

/// Rejects `size` unless it is a positive multiple of `ratio`.
pub(crate) fn check_divisible(size: usize, ratio: usize) -> Result<()> {
    if size > 0 && size.is_multiple_of(ratio) {
        return Ok(());
    }
    let below = (size / ratio).max(1) * ratio;
    let above = (size / ratio + 1) * ratio;
    let below = if below > size { ratio } else { below };
    Err(Error::Divisibility { size, ratio, below, above })
}
