use thiserror::Error;

/// Errors raised by the numeric kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("extended size {0} is not a power of two (grid sizes must be 2^k - 1)")]
    NonPowerOfTwoSize(usize),
    #[error("grid mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: String, found: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-positive coefficient {value} at index {index}")]
    NonPositiveCoefficient { index: usize, value: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("zero diagonal entry at node {0}")]
    ZeroDiagonal(usize),
    #[error("stencil is not spatially constant")]
    NotConstantStencil,
    #[error("frequency partition leaves the {empty} side empty (mu_B = {mu_b}, eps_B = {eps_b})")]
    EmptyPartition { empty: &'static str, mu_b: f64, eps_b: f64 },
    #[error("index ({0}, {1}) out of range")]
    IndexOutOfRange(usize, usize),
    #[error("right-hand side is zero")]
    ZeroRhs,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("iteration diverged after {iterations} steps (relative residual {relative_residual:e})")]
    Diverged { iterations: usize, relative_residual: f64 },
    #[error("no convergence within {iterations} iterations (relative residual {relative_residual:e})")]
    MaxIterations { iterations: usize, relative_residual: f64 },
    #[error("QR eigen-iteration did not converge within {0} sweeps")]
    NonConvergentQR(usize),
    #[error("eigenvector basis is singular")]
    SingularEigenbasis,
    #[error("singular matrix in dense solve")]
    SingularMatrix,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
