//! Numerical laboratory for Brownian motion with constant negative drift
//! absorbed at zero.
//!
//! The crate covers the exact absorbed transition kernel and everything that
//! follows from integrating it against an initial law: survival
//! probabilities, conditioned laws, the reweighted family `ν_t`, tail-based
//! classification of the quasi-limiting behaviour, heavy-tail scaling
//! limits, and Monte Carlo ground truth.

pub mod chebyshev;
pub mod error;
pub mod kernel;
pub mod model;
pub mod quadrature;
pub mod simulate;
pub mod special;
pub mod stats;
pub mod tails;

pub use error::{Error, Result};
pub use kernel::{ConditionedEstimate, Kernel, NuMeasure, Probability};
pub use model::{
    absorption_rate, measure_eval, qsd_density, DriftModel, InitialMeasure, MeasurePoint, QsdDensity, TabulatedTail,
    TailExtension,
};
pub use quadrature::Tolerance;
pub use simulate::{Conditioning, EmpiricalSample, SimConfig, SurvivalCi};
pub use stats::{dkw_band, ks_distance, CdfKind, CdfView};
pub use tails::{classify, LawFamily, LimitLaw, Regime, ScalingRule, TailProfile};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
