use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at step {step}: non-finite parameters")]
    Diverged { step: usize },
    #[error("non-finite value during influence sweep at step {step}")]
    NonFinite { step: usize },
    #[error("invalid time window [{t1}, {t2}] for a run of {steps} steps")]
    InvalidWindow { t1: usize, t2: usize, steps: usize },
    #[error("parameters for step {step} are not recoverable from the stored trajectory")]
    NotStored { step: usize },
    #[error("no checkpoint at or before step {step}")]
    MissingCheckpoint { step: usize },
    #[error("dense path limited to p <= {limit}, model has p = {p}")]
    DenseGuard { p: usize, limit: usize },
    #[error("linear system is singular to working precision")]
    Singular,
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("influence for sample {0} is missing")]
    MissingSample(usize),
}
