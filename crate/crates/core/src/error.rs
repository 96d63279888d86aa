use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(
        "exponent magnitude {magnitude:.1} exceeds 700 at x = {x}; \
         rebuild the table with log-space mode enabled"
    )]
    ExponentOverflow { x: f64, magnitude: f64 },

    #[error("x = {x} is outside the table grid [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },

    #[error("quadrature did not reach tolerance {tol:e} (estimated error {estimate:e})")]
    Tolerance { tol: f64, estimate: f64 },

    #[error("time step refused: {0}")]
    StepRefused(String),

    #[error("empty sample")]
    EmptySample,

    #[error("hypothesis check failed: {0}")]
    HypothesisFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
