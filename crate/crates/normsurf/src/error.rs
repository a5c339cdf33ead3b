use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("immersion degenerate at ({x}, {y}): smallest singular value {sigma_min:.3e}")]
    Immersion { x: f64, y: f64, sigma_min: f64 },

    #[error("ill-conditioned {what}: condition number {cond:.3e}")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error("point ({x}, {y}) leaves the calibrator tube")]
    OutOfTube { x: f64, y: f64 },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
