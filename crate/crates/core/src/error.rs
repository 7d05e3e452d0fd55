use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("Cholesky factorisation failed; smallest eigenvalue {min_eigenvalue:e}")]
    CholeskyFailed { min_eigenvalue: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("quadrature did not converge: max change {max_change:e} between {nodes_prev} and {nodes_last} nodes")]
    QuadratureNotConverged {
        max_change: f64,
        nodes_prev: usize,
        nodes_last: usize,
        previous: Vec<f64>,
        last: Vec<f64>,
    },

    #[error("Hermite rank {rank} is below the required minimum {required}")]
    RankTooLow { rank: usize, required: usize },

    #[error("numeric overflow in coordinate {coordinate}")]
    Overflow { coordinate: usize },

    #[error("majorant does not converge: {0}")]
    NonConvergentMajorant(String),

    #[error("experiment cell (n = {n}, d = {d}) failed: {source}")]
    Cell {
        n: usize,
        d: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
