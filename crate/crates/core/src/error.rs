use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("singular point: {0}")]
    SingularPoint(String),
    #[error("precision exhausted at {bits} bits: {context}")]
    PrecisionExhausted { bits: u32, context: String },
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("branch is not monotone: {0}")]
    NonMonotone(String),
    #[error("insufficient depth: {0}")]
    InsufficientDepth(String),
    #[error("index out of computed depth: {0}")]
    OutOfDepth(String),
    #[error("branch identification failed: {0}")]
    BranchIdentification(String),
    #[error("parameter not found: {0}")]
    NotFound(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("ordering violated: {0}")]
    Ordering(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("sequence tail not declared: {0}")]
    TailUndeclared(String),
    #[error("divergent tail: {0}")]
    DivergentTail(String),
    #[error("invalid probability law: {0}")]
    InvalidLaw(String),
    #[error("sequence is not strictly increasing: {0}")]
    NonIncreasing(String),
    #[error("point outside the annulus partition: {0}")]
    OutsidePartition(String),
    #[error("nesting violated: {0}")]
    NestingViolation(String),
    #[error("precritical point: {0}")]
    Precritical(String),
    #[error("scaling condition fails: {0}")]
    Scaling(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn precision(bits: u32, context: impl Into<String>) -> Self {
        Error::PrecisionExhausted {
            bits,
            context: context.into(),
        }
    }

    pub fn is_precision(&self) -> bool {
        matches!(self, Error::PrecisionExhausted { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
