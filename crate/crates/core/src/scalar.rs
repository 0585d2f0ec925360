//! Numeric traits the metric code is generic over.
//!
//! Distances and entropies need transcendental functions, so they are written
//! against [`Real`] (`f32` or `f64`). Aggregations that only add and divide,
//! such as SND, are written against [`Exact`], which rational types also
//! satisfy; this lets the closed-form identities be checked with zero rounding.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {
    /// Converts a literal, panicking only for types that cannot hold an `f64`.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Send + Sync + 'static {}

/// Field-like scalar closed under `+ - * /` with an ordering.
///
/// Implemented by the floats and by `num_rational::Ratio` over the signed
/// integers.
pub trait Exact: Num + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Exact for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static {}

pub(crate) fn from_usize<T: Exact>(n: usize) -> T {
    T::from_usize(n).expect("count not representable in scalar type")
}
