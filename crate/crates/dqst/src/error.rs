//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix not hermitian: max |M - M^dag| = {deviation:.3e} exceeds {tol:.3e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("GKS matrix not positive semidefinite: eigenvalue {0:.3e}")]
    GksNotPsd(f64),

    #[error("design matrix rank {rank} < d^2 = {d2}: reconstruction is not unique")]
    RankDeficient { rank: usize, d2: usize },

    #[error(
        "target observable lies outside the observable subspace \
         (orthogonal residual {residual:.3e})"
    )]
    TargetNotReconstructable { residual: f64 },

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
