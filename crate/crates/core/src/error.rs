use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("vector must have unit norm (got norm {norm})")]
    NormalizationRequired { norm: f64 },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed ensemble file at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("ensemble integrity violated: {0}")]
    Integrity(String),

    #[error(
        "dense Hessian is limited to n <= {limit} (got n = {n}); \
         use hessian_vector_product with the iterative eigensolver instead"
    )]
    Capacity { n: usize, limit: usize },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("degenerate moments: {0}")]
    DegenerateMoments(String),

    #[error("no sampled direction satisfied the correlation band")]
    Sampling,

    #[error("insufficient coverage: every sampled point fell inside dist < {delta0}")]
    InsufficientCoverage { delta0: f64 },

    #[error("solver diverged: non-finite loss at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
