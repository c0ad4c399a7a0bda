use thiserror::Error;

/// Errors returned by constructors, estimators and parsers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: u64, n: u64 },

    #[error("update magnitude {delta} exceeds bound {bound}")]
    DeltaOutOfRange { delta: i64, bound: u64 },

    #[error("incompatible sketches: {0}")]
    Incompatible(String),

    #[error("no prime in [{lo}, {hi}]")]
    NoPrime { lo: u64, hi: u64 },

    #[error("level saturated: {occupied} of {bins} bins occupied")]
    LevelSaturated { occupied: usize, bins: usize },

    #[error("stream cannot be replayed for pass {pass}")]
    NotReplayable { pass: usize },

    #[error("F2 estimate is zero but the table is nonzero")]
    ZeroNormEstimate,

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed sketch blob: {0}")]
    Blob(String),

    #[error("io error: {0}")]
    Io(String),
}

impl SketchError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SketchError::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for SketchError {
    fn from(err: std::io::Error) -> Self {
        SketchError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SketchError>;
