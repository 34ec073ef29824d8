use thiserror::Error;

/// Errors raised by the kernel, moment and particle modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error(
        "quadrature did not converge: estimate {estimate}, error estimate {error:.3e} above tolerance {tolerance:.3e}"
    )]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing moments at orders {0:?}")]
    MissingMoments(Vec<f64>),

    #[error("shear forcing provides no lower bound on G_p")]
    ShearLowerUnavailable,

    #[error("1 - gamma_p = {gap:.3e} is below 1e-12 at p = {p}")]
    GammaDegenerate { p: f64, gap: f64 },

    #[error("infeasible moment bounds: empty interval at p = {p} (ln lo = {ln_lo}, ln hi = {ln_hi})")]
    Infeasible { p: f64, ln_lo: f64, ln_hi: f64 },

    #[error("tail estimate inconclusive: {0}")]
    Inconclusive(String),

    #[error("insufficient tail statistics: {0}")]
    InsufficientTail(String),

    #[error("mismatched parameters: {0}")]
    Mismatched(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
