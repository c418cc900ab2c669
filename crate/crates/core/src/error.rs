//! Shared error type.

use thiserror::Error;

/// Errors raised by configuration validation, estimation, persistence and
/// trace ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),

    #[error("gamma must lie in [0, 0.5), got {0}")]
    InvalidGamma(f64),

    #[error("tau must be positive, got {0}")]
    InvalidTau(f64),

    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    #[error("granularity s must divide m with 1 <= s <= m, got m={m}, s={s}")]
    InvalidGranularity { m: u64, s: u64 },

    #[error("bucket parameters must satisfy 1 <= d <= k, got k={k}, d={d}")]
    InvalidBucketConfig { k: usize, d: usize },

    #[error("counter value {value} outside [0, {m}]")]
    CounterOutOfRange { value: u64, m: u64 },

    #[error("bucket index {bucket} outside [1, {k}]")]
    BucketOutOfRange { bucket: usize, k: usize },

    #[error("value {value} is not on the rounding grid (multiples of {s} up to {m})")]
    OffGrid { value: u64, s: u64, m: u64 },

    #[error("flip-probability ratio bound is undefined for gamma = 0 with delta > 0")]
    UndefinedBound,

    #[error("aggregate contains no responses")]
    EmptyAggregate,

    #[error("cannot merge aggregates with different configurations")]
    ConfigMismatch,

    #[error("behavior pattern of an empty sequence is undefined")]
    EmptySequence,

    #[error("sequence length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("corrupt client state: {0}")]
    CorruptState(&'static str),

    #[error("unsupported client-state version {0}")]
    UnsupportedVersion(u8),

    #[error("trace parse error at line {line}: {message}")]
    TraceParse { line: usize, message: String },

    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
