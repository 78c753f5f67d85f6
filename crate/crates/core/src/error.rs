use thiserror::Error;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Schur stable (spectral radius {rho})")]
    NotSchurStable { rho: f64 },

    #[error("Riccati iteration diverged after {iterations} iterations")]
    DareDiverged { iterations: usize },

    #[error("matrix is numerically defective (eigenvector condition number {condition:e})")]
    DefectiveMatrix { condition: f64 },

    #[error("instability order {t} outside 1..={n}")]
    InvalidOrder { t: usize, n: usize },

    #[error("bound not applicable: {0}")]
    BoundNotApplicable(String),

    #[error("invalid witness: {0}")]
    InvalidWitness(String),

    #[error("initial state has zero norm")]
    DegenerateStart,

    #[error("no data collected yet")]
    InsufficientData,

    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
