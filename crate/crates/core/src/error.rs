use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("factor index {index} out of range for {factors} tensor factors")]
    IndexOutOfRange { index: usize, factors: usize },

    #[error("transfer operator has non-trivial peripheral spectrum ({count} eigenvalues of modulus ~1)")]
    NotPure { count: usize },

    #[error("fixed point is singular (min eigenvalue {min_eigenvalue:.3e})")]
    SingularFixedPoint { min_eigenvalue: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("V V^dagger deviates from the identity by {deviation:.3e}")]
    NotIsometry { deviation: f64 },

    #[error("ensemble size {size} is smaller than the rank {rank}")]
    EnsembleTooSmall { size: usize, rank: usize },

    #[error("too few usable points for a decay fit ({usable}, need at least 3)")]
    TooFewPoints { usable: usize },

    #[error("vector norm {norm} is not 1")]
    NonUnitVector { norm: f64 },

    #[error("random model generation failed after {retries} retries; last spectrum moduli {last_moduli:?}")]
    RetriesExhausted { retries: usize, last_moduli: Vec<f64> },

    #[error("invalid model reference `{0}`")]
    InvalidModelRef(String),

    #[error("malformed model file: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
