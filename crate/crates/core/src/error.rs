use thiserror::Error;

/// Errors raised by the numerical kernels and the system model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix `{0}` contains non-finite entries")]
    NonFinite(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("singular Sylvester operator: |lambda_i(A) + mu_j(B)| = {gap:e} is numerically zero")]
    SingularSylvester { gap: f64 },

    #[error("unstable coefficient: largest eigenvalue real part is {max_real:e}")]
    Unstable { max_real: f64 },

    #[error("rank deficient at index {index}: {value:e} is below the threshold {threshold:e}")]
    RankDeficient {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("Krylov breakdown: achieved dimension {achieved} of {requested}")]
    Breakdown { achieved: usize, requested: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by the numbers rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSylvester { .. }
                | Error::Unstable { .. }
                | Error::RankDeficient { .. }
                | Error::Singular(_)
                | Error::NoConvergence(_)
                | Error::Breakdown { .. }
        )
    }
}
