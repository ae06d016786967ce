use thiserror::Error;

/// Errors raised by the regression toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The estimator's feasible set is empty at the requested tuning.
    /// `suggested_tau` is the smallest level at which `theta = 0` is feasible.
    #[error("problem infeasible at the requested tuning (theta = 0 becomes feasible for tau >= {suggested_tau:.6e})")]
    Infeasible { suggested_tau: f64 },

    #[error("problem unbounded")]
    Unbounded,

    /// The LP reformulation of the compensated selector returned a point whose
    /// l1 norm does not match its auxiliary level, so `r = phi(r)` has no root.
    #[error("fixed-point equation r = phi(r) has no solution (LP level {lp_level:.6e}, |theta|_1 = {l1_norm:.6e})")]
    NoFixedPoint { lp_level: f64, l1_norm: f64 },

    #[error("solver did not converge: {0}")]
    SolverFailure(String),

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("matrix is not positive definite")]
    NotPd,

    #[error("zero diagonal entry at index {0}")]
    ZeroDiagonal(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
