use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the library.
///
/// Variants fall into three families that the CLI maps onto exit codes:
/// malformed or inconsistent input (`Invalid*`, `Parse`, `Io`), input that
/// is well formed but violates a model requirement (`NotConvex`,
/// `NotPeacock`, `MeanMismatch`, `NegativeTimeDerivative`), and numerical
/// failures (`Cfl`, `NegativeDensity`, `Lp`, `BalanceInfeasible`, ...).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("time {t} is not a node of the grid")]
    TimeNotOnGrid { t: f64 },

    #[error("nonpositive density {value:e} at x = {x}")]
    NonPositiveDensity { x: f64, value: f64 },

    #[error("call prices not convex at strike {strike} (second difference {second_difference:e})")]
    NotConvex { strike: f64, second_difference: f64 },

    #[error("family is not a peacock between t = {t_first} and t = {t_second}: {reason}")]
    NotPeacock { t_first: f64, t_second: f64, reason: String },

    #[error("means differ: {first} vs {second}")]
    MeanMismatch { first: f64, second: f64 },

    #[error("call price decreasing in time at (t = {t}, x = {x}): C_t = {value:e}")]
    NegativeTimeDerivative { t: f64, x: f64, value: f64 },

    #[error("explicit scheme unstable: sigma^2 dt / dx^2 = {ratio} > 0.5")]
    Cfl { ratio: f64 },

    #[error("negative density {value:e} at (t = {t}, x = {x})")]
    NegativeDensity { t: f64, x: f64, value: f64 },

    #[error("initial measure has mass outside the solver grid at x = {x}")]
    OutsideGrid { x: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("no martingale coupling between t = {t_first} and t = {t_second}")]
    ChainInfeasible { interval: usize, t_first: f64, t_second: f64 },

    #[error("excursion balance infeasible at step {step}: leave probability {probability}")]
    BalanceInfeasible { step: usize, probability: f64 },

    #[error("no paths in conditioning window around {z} (bandwidth {bandwidth})")]
    EmptyWindow { z: f64, bandwidth: f64 },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
