use thiserror::Error;

/// Errors raised by the library. Check failures are not errors; they are
/// carried by the report types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("fields or operators live on different spaces")]
    SpaceMismatch,
    #[error("exponent p = {0} is not admissible here")]
    InvalidExponent(f64),
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("symmetric eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    EigenNonConvergence { sweeps: usize, residual: f64 },
    #[error("heat operator has entry {value:e} below the clipping tolerance")]
    NegativeKernelEntry { value: f64 },
    #[error("spectral function is not finite at eigenvalue {0}")]
    NonFiniteSpectralValue(f64),
    #[error("invalid multiplier: {0}")]
    InvalidMultiplier(String),
    #[error("quadrature grid too coarse: error bound {bound:e} exceeds requested {requested:e}")]
    InsufficientGrid { bound: f64, requested: f64 },
    #[error("path enumeration needs {paths} paths, budget is {budget}")]
    BudgetExceeded { paths: u128, budget: u64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
