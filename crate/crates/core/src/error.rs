use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("conjugate symmetry violated: relative imaginary mass {0:.3e}")]
    SymmetryViolation(f64),

    #[error("rank {rank} out of range (allowed 1..={max})")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("basis columns are not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("sampled operator is rank deficient")]
    SingularOperator,

    #[error("reference tensor has zero norm")]
    ZeroReference,

    #[error("mask kind mismatch: expected {expected}, got {found}")]
    MaskKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
