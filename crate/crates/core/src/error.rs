use thiserror::Error;

/// Errors produced by the transport, slicing, and amortization routines.
#[derive(Debug, Error)]
pub enum AotError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("epsilon must be strictly positive, got {0}")]
    EpsilonNonPositive(f64),

    #[error("total masses differ: {a} vs {b}")]
    MassMismatch { a: f64, b: f64 },

    #[error("measure has no atoms")]
    EmptyMeasure,

    #[error("weight {index} is not strictly positive ({value})")]
    PositivityViolation { index: usize, value: f64 },

    #[error("total mass {0} deviates too far from 1 to renormalize")]
    MassNotNormalizable(f64),

    #[error("atom {index} is not on the unit sphere (norm {norm})")]
    NotOnSphere { index: usize, norm: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("bad dimension: {0}")]
    BadDimension(String),

    #[error("gram matrix is singular even after jitter")]
    SingularGram,

    #[error("invalid task spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    BadVersion(u32),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("interpolation time must lie in [0, 1], got {0}")]
    BadT(f64),

    #[error("operation requires the {expected} cost family")]
    WrongCostFamily { expected: &'static str },

    #[error("plan carries no mass")]
    DegeneratePlan,

    #[error("no training pair produced a converged ground truth")]
    NoConvergedPairs,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AotError>;

impl AotError {
    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        use AotError::*;
        match self {
            InvalidSpec(_) | InvalidConfig(_) | BadDimension(_) | BadT(_) | WrongCostFamily { .. } => {
                ErrorKind::Config
            }
            SingularGram | NonFinite(_) | NoConvergedPairs | EpsilonNonPositive(_) => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}
