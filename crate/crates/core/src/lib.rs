//! Behavioral diversity metrics for multi-agent systems with stochastic
//! Gaussian policies.
//!
//! The metric core ([`distributions`], [`distance`], [`metrics`]) is generic
//! over the scalar type; the aliases below fix it to `f64`. The remaining
//! modules provide small continuous-control tasks, neural policies and a
//! clipped policy-gradient trainer used to study the metrics during learning.

pub mod analysis;
pub mod control;
pub mod distance;
pub mod distributions;
pub mod envs;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod policies;
pub mod rollout;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};

/// Double-precision diagonal Gaussian.
pub type Gaussian = distributions::DiagonalGaussian<f64>;
/// Double-precision behavioral distance matrix.
pub type DistanceMatrix = distance::BehavioralDistanceMatrix<f64>;
/// Distance matrix over exact rationals, for checking closed forms.
pub type RationalDistanceMatrix = distance::BehavioralDistanceMatrix<num_rational::Ratio<i64>>;
/// Single-precision behavioral distance matrix.
pub type DistanceMatrixF32 = distance::BehavioralDistanceMatrix<f32>;
