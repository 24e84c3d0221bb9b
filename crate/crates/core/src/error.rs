use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("oracle returned a non-finite value at step {step}")]
    OracleFailure { step: u64 },

    #[error("oracle cannot evaluate a {found} sample (expected {expected})")]
    SampleMismatch { expected: &'static str, found: &'static str },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("buffer index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("source has no stationary sampler: {0}")]
    NoStationarySampler(String),

    #[error("sample source exhausted")]
    BufferExhausted,

    #[error("estimated covariance is degenerate (smallest eigenvalue {0:e})")]
    DegenerateCovariance(f64),

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("transition matrix is not ergodic: {0}")]
    NotErgodic(String),

    #[error("skip parameter must be at least 1 and at most the buffer length (got {skip}, buffer {len})")]
    InvalidSkip { skip: usize, len: usize },

    #[error("invalid epoch schedule: {0}")]
    InvalidSchedule(String),

    #[error("buffer of length {len} cannot supply {steps} samples at gap {gap}")]
    InsufficientBuffer { len: usize, gap: usize, steps: usize },

    #[error("step-size schedule is non-positive ({0:e}); constants are inconsistent")]
    NonPositiveStepSize(f64),

    #[error("reference error must be positive (got {0:e})")]
    ZeroReference(f64),

    #[error("step displacement {displacement:e} exceeds 2*eta*|F| = {bound:e} at step {step}")]
    ContractionViolated { step: u64, displacement: f64, bound: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Snapshot(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Snapshot(e.to_string())
    }
}
