use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MacpError> = std::result::Result<T, E>;

/// Errors raised by the numerical core and the selection machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacpError {
    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("expected {expected} values for a {rows}x{cols} matrix, got {actual}")]
    ValueCount {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("vector length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("requested {requested} coefficients but only {available} cells are permitted")]
    Capacity { requested: usize, available: usize },

    #[error("delta ratio {0} is outside [0, 1]")]
    DeltaOutOfRange(f64),

    #[error("invalid rank {rank} for a {rows}x{cols} layer")]
    InvalidRank { rank: usize, rows: usize, cols: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown partition scheme `{0}`")]
    UnknownScheme(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),
}

/// Errors raised while reading or writing weight files, checkpoints and CSVs.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic bytes {found:?}, expected \"MACP\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("{extra} unexpected trailing bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("dimensions {rows}x{cols} overflow the addressable payload size")]
    DimensionOverflow { rows: u64, cols: u64 },

    #[error("checkpoint is missing key `{0}`")]
    MissingKey(&'static str),

    #[error("checkpoint key `{key}` is malformed: {reason}")]
    Malformed { key: &'static str, reason: String },

    #[error("checkpoint list lengths disagree: coords={coords}, provenance={provenance}, coeffs={coeffs}")]
    ListLengthMismatch {
        coords: usize,
        provenance: usize,
        coeffs: usize,
    },

    #[error("non-finite coefficient at index {index}")]
    NonFiniteCoefficient { index: usize },

    #[error("checkpoint is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] MacpError),
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }
}
