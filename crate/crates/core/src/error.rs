use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),

    #[error("dimensions must be multiples of 8 (got {width}x{height})")]
    DimensionNotMultipleOf8 { width: usize, height: usize },

    #[error("truncated payload in frame {frame}")]
    TruncatedFrame { frame: usize },

    #[error("file size mismatch: expected at least {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("unsupported chroma format: {0}")]
    UnsupportedChroma(String),

    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("unsupported GOP size {0} (only 32 is implemented)")]
    UnsupportedGop(u32),

    #[error("split {mode:?} is not legal for a {w}x{h} CU")]
    IllegalSplit {
        mode: crate::qtmt::SplitMode,
        w: usize,
        h: usize,
    },

    #[error("block dimensions {0}x{1} are not multiples of 4")]
    NotMultipleOf4(usize, usize),

    #[error("CU footprint lies outside the CTU")]
    OutsideCtu,

    #[error("CU lies entirely outside the picture")]
    OutsideFrame,

    #[error("qp {0} out of range 0..=51")]
    QpOutOfRange(i32),

    #[error("missing reconstruction for reference poc {0}")]
    MissingReference(usize),

    #[error("curve needs at least 4 points, got {0}")]
    TooFewPoints(usize),

    #[error("curves have no overlapping quality interval")]
    NoOverlap,

    #[error("duplicate quality value {0} in curve")]
    DuplicateQuality(f64),

    #[error("rate values must be positive")]
    NonPositiveRate,

    #[error("frame too small for complexity analysis ({0}x{1})")]
    FrameTooSmall(usize, usize),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid configuration: {0}")]
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

pub type Result<T> = std::result::Result<T, Error>;
