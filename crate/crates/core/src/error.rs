use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: relative asymmetry {asymmetry:.3e} exceeds {tolerance:.1e}")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("metric is fully singular: no eigenvalue above cutoff {cutoff:.3e}")]
    FullySingularMetric { cutoff: f64 },

    #[error("metric is not positive semidefinite: eigenvalue {eigenvalue:.3e} (largest {largest:.3e})")]
    NotPositiveSemidefinite { eigenvalue: f64, largest: f64 },

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("dense state guard: {n_sites} sites of dimension {d} exceed the dense limit")]
    DenseGuard { n_sites: usize, d: usize },

    #[error("state has vanishing norm ({norm:.3e})")]
    DegenerateState { norm: f64 },

    #[error("network set requires {required} bytes, budget is {budget} bytes")]
    MemoryBudget { required: u64, budget: u64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
