use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {t} lies outside the domain [{a}, {b}]")]
    Domain { t: f64, a: f64, b: f64 },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("linear system is too ill-conditioned (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("eigenvalue iteration failed to converge")]
    EigenConvergence,

    #[error("eigenvalues coalesce near t = {t} (turning point)")]
    TurningPoint { t: f64 },

    #[error("Newton iteration for branch {branch} produced non-finite values")]
    Divergence { branch: usize },

    #[error("subdivision budget exhausted after {} accepted intervals (last breakpoint {})",
        .partial.len().saturating_sub(1), .partial.last().copied().unwrap_or(f64::NAN))]
    BudgetExhausted { partial: Vec<f64> },

    #[error("local solve failed at maximum bisection depth near t = {t}")]
    DepthExceeded { t: f64 },

    #[error("basis function for branch {branch} overflows")]
    Overflow { branch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
