use thiserror::Error;

/// Errors raised by the relay optimization toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("distance must be positive, got {0}")]
    InvalidDistance(f64),
    #[error("channel matrix is zero")]
    ZeroChannel,
    #[error("MSE matrix is numerically singular (min eigenvalue {0:.3e})")]
    SingularMse(f64),
    #[error("relay budget is negative ({0:.3e})")]
    InfeasibleBudget(f64),
    #[error("rank reduction found no null direction at rank {0}")]
    NoNullDirection(usize),
    #[error("iteration limit reached after {0} iterations")]
    MaxIterations(usize),
    #[error("matrix is not rank one (eigenvalue ratio {0:.3e})")]
    NotRank1(f64),
    #[error("semidefinite program is infeasible")]
    SdpInfeasible,
    #[error("source step failed: {0}")]
    DropFailed(String),
    #[error("channel is rank deficient (singular value ratio {0:.3e})")]
    RankDeficient(f64),
    #[error("power allocation problem is infeasible: {0}")]
    Infeasible(String),
    #[error("Newton iteration diverged after {0} iterations")]
    NewtonDiverged(usize),
    #[error("brute-force enumeration limited to r <= 5, got {0}")]
    TooLarge(usize),
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

pub type Result<T> = std::result::Result<T, Error>;
