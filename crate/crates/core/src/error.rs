use thiserror::Error;

/// Errors raised by the algorithms in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("function is not caloric: heat residual has {nonzero_terms} nonzero terms")]
    NotCaloric { nonzero_terms: usize },

    #[error("degenerate functional: H = {h:e} at tau = {tau:e}")]
    Degenerate { h: f64, tau: f64 },

    #[error("quadrature did not converge: estimated error {err:e} exceeds tolerance {tol:e}")]
    QuadratureNotConverged { err: f64, tol: f64 },

    #[error("point set is dependent: covering radius {radius:e} <= {threshold:e}")]
    Dependent { radius: f64, threshold: f64 },

    #[error("no pinched scale found in the searched window")]
    NoPinchedScale,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("projection collision: two centers project to the same point ({0:?}, {1:?})")]
    ProjectionCollision(Vec<f64>, Vec<f64>),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
