use thiserror::Error;

/// Errors raised by the simulators, predictors and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EosError {
    #[error("derivative of order {requested} not available (max order {max_order})")]
    UnsupportedOrder { requested: usize, max_order: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not a local minimum: f'={first:e}, f''={second:e}")]
    NotAMinimum { first: f64, second: f64 },

    #[error("condition not applicable: {0}")]
    NotApplicable(String),

    #[error("no period-2 orbit: eta*mu = {eta_mu} <= 1, iterates settle at the fixed point {fixed_point}")]
    NoOrbit { eta_mu: f64, fixed_point: f64 },

    #[error("diverged after step {last_finite_step}")]
    Divergence {
        last_finite_step: usize,
        last_state: Vec<f64>,
    },

    #[error("did not converge after {iters} iterations (last estimate {last_estimate})")]
    NonConvergence { iters: usize, last_estimate: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trajectory too short: need {needed} points, have {have}")]
    InsufficientLength { needed: usize, have: usize },

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for EosError {
    fn from(err: std::io::Error) -> Self {
        EosError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EosError>;
