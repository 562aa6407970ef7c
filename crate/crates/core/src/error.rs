use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("quadrature did not reach tolerance on [{a}, {b}] (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("Picard iteration did not converge after {iterations} iterations (last error {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        errors: Vec<f64>,
    },

    #[error("could not bracket the boundary at t = {t}: f({lo}) = {f_lo:e}, f({hi}) = {f_hi:e}")]
    Bracket {
        t: f64,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("curve fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
