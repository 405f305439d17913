use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("eigenvalue iteration did not converge")]
    NonConvergence,

    #[error("Sylvester operator is singular (eigenvalues of the two operands sum to ~0)")]
    SingularSylvester,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("tolerance violated: {what} (deviation {deviation:e})")]
    ToleranceViolation { what: &'static str, deviation: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix {0} contains non-finite entries")]
    NonFinite(&'static str),

    #[error("model is not stable: max real part of eigenvalues is {max_real_part}")]
    NotStable { max_real_part: f64 },

    #[error("error system is not Hurwitz: max real part {max_real_part}")]
    UnstableErrorSystem { max_real_part: f64 },

    #[error("reduced model has a nonzero feedthrough term (max |D| = {max_abs:e}); the H2 error is unbounded")]
    NonzeroFeedthrough { max_abs: f64 },

    #[error("horizon too short: slowest mode decays only to {remaining:e} of its initial magnitude")]
    HorizonTooShort { remaining: f64 },

    #[error("fast block QAQ^T is singular or ill-conditioned (condition number {condition:e})")]
    SingularFastBlock { condition: f64 },

    #[error("state index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("duplicate state index {0}")]
    DuplicateIndex(usize),

    #[error("retained set must contain at least one state")]
    EmptyRetainedSet,

    #[error("invalid reduced order {order} for a model with n = {n}: {reason}")]
    InvalidOrder { order: usize, n: usize, reason: &'static str },

    #[error("no reduction possible: {0}")]
    NoReductionPossible(&'static str),

    #[error("output matrix is rank deficient (rank {rank} < p = {p})")]
    RankDeficientOutput { rank: usize, p: usize },

    #[error("greedy subspace cannot be aligned with the fixed output basis (residual {residual:e})")]
    AlignmentInfeasible { residual: f64 },

    #[error("generated system could not be stabilized after {0} attempts")]
    StabilizationFailed(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
