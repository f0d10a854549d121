use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid power allocation: {0}")]
    InvalidAllocation(String),
    #[error("Gram matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("geometric program is infeasible")]
    Infeasible,
    #[error("geometric program is unbounded below")]
    Unbounded,
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("malformed channel dump: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
