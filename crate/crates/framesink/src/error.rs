//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An operation received an empty collection it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    /// Vector/descriptor lengths disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Rotary pairing requires an even per-head dimension.
    #[error("head dimension must be even, got {0}")]
    OddHeadDim(usize),
    /// Tensor shapes are inconsistent.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// Normalization or cosine similarity of a zero-norm vector.
    #[error("zero-norm input: {0}")]
    ZeroNorm(&'static str),
    /// Bank insertions must carry strictly increasing block indices.
    #[error("block index {got} is not greater than existing maximum {max}")]
    NonMonotoneBlockIndex { got: u64, max: u64 },
    /// Lookup of a block index the bank does not hold.
    #[error("unknown block index {0}")]
    UnknownBlockIndex(u64),
    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Config file parsing or validation failure.
    #[error("config error: {0}")]
    Config(String),
    /// Bank snapshot encoding/decoding failure.
    #[error("snapshot error: {0}")]
    Snapshot(String),
    /// Trace file parsing failure.
    #[error("trace error: {0}")]
    Trace(String),
    /// Underlying I/O failure (message only, so the error stays comparable).
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
