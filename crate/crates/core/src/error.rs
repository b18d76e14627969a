use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("x = {x} lies outside the tabulated range [{lo}, {hi}] and no tail extension is attached")]
    Extrapolation { x: f64, lo: f64, hi: f64 },

    /// Quadrature did not reach the requested tolerance within its budget.
    #[error("quadrature did not converge: value {value:e}, error estimate {error:e} after {evals} evaluations")]
    Accuracy { value: f64, error: f64, evals: usize },

    #[error("conditioning is degenerate: {0}")]
    Degenerate(String),

    #[error("exponential rate is indeterminate: window [{lo}, {hi}]")]
    IndeterminateRate { lo: f64, hi: f64 },

    #[error("tail is not smoothly varying: {0}")]
    NotSmoothlyVarying(String),

    #[error("classification refused: liminf rate {liminf} < alpha {alpha} < limsup rate {limsup}")]
    ClassificationRefused { liminf: f64, limsup: f64, alpha: f64 },

    #[error("operation requires a heavy-scaled regime, found {0}")]
    Regime(String),

    #[error("all particles absorbed at t = {t}")]
    Extinction { t: f64 },

    #[error("invalid simulation setup: {0}")]
    Simulation(String),

    #[error("empty sample")]
    EmptySample,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
