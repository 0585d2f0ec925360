//! Diagonal Gaussian action distributions and closed-form distances between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest admissible standard deviation. KL and Hellinger are singular at
/// zero spread, so every constructor clamps to this value.
pub const STDDEV_FLOOR: f64 = 1e-6;

/// Product of independent univariate Gaussians, one per action dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian<T> {
    means: Vec<T>,
    stddevs: Vec<T>,
}

impl<T: Real> DiagonalGaussian<T> {
    /// Builds a distribution, flooring standard deviations at [`STDDEV_FLOOR`].
    ///
    /// Negative or non-finite parameters are rejected.
    pub fn new(means: Vec<T>, stddevs: Vec<T>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InvalidDistribution("zero action dimensions".into()));
        }
        if means.len() != stddevs.len() {
            return Err(Error::DimensionMismatch {
                expected: means.len(),
                got: stddevs.len(),
            });
        }
        if let Some(m) = means.iter().find(|m| !m.is_finite()) {
            return Err(Error::InvalidDistribution(format!("non-finite mean {m:?}")));
        }
        let floor = T::lit(STDDEV_FLOOR);
        let mut floored = Vec::with_capacity(stddevs.len());
        for s in stddevs {
            if !s.is_finite() || s < T::zero() {
                return Err(Error::InvalidDistribution(format!("bad stddev {s:?}")));
            }
            floored.push(if s < floor { floor } else { s });
        }
        Ok(Self {
            means,
            stddevs: floored,
        })
    }

    /// Same standard deviation on every dimension.
    pub fn isotropic(means: Vec<T>, stddev: T) -> Result<Self> {
        let stddevs = vec![stddev; means.len()];
        Self::new(means, stddevs)
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn stddevs(&self) -> &[T] {
        &self.stddevs
    }

    /// Log-density at `x`.
    pub fn log_prob(&self, x: &[T]) -> Result<T> {
        check_dim(self.dim(), x.len())?;
        let half_ln_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
        let mut lp = T::zero();
        for ((&m, &s), &xi) in self.means.iter().zip(&self.stddevs).zip(x) {
            let z = (xi - m) / s;
            lp = lp - T::lit(0.5) * z * z - s.ln() - half_ln_2pi;
        }
        Ok(lp)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Wasserstein-2 distance.
///
/// For diagonal covariances the Bures term collapses to the squared difference
/// of standard deviations, so
/// `W2² = Σ_d (μp,d − μq,d)² + (σp,d − σq,d)²`.
pub fn wasserstein2<T: Real>(p: &DiagonalGaussian<T>, q: &DiagonalGaussian<T>) -> Result<T> {
    check_dim(p.dim(), q.dim())?;
    let mut acc = T::zero();
    for d in 0..p.dim() {
        let dm = p.means[d] - q.means[d];
        let ds = p.stddevs[d] - q.stddevs[d];
        acc = acc + dm * dm + ds * ds;
    }
    Ok(acc.sqrt())
}

/// `KL(p ‖ q)`, summed over independent dimensions. Asymmetric.
pub fn kl_divergence<T: Real>(p: &DiagonalGaussian<T>, q: &DiagonalGaussian<T>) -> Result<T> {
    check_dim(p.dim(), q.dim())?;
    let half = T::lit(0.5);
    let mut acc = T::zero();
    for d in 0..p.dim() {
        let (mp, sp) = (p.means[d], p.stddevs[d]);
        let (mq, sq) = (q.means[d], q.stddevs[d]);
        let dm = mp - mq;
        acc = acc + (sq / sp).ln() + (sp * sp + dm * dm) / (T::lit(2.0) * sq * sq) - half;
    }
    // Rounding can leave a tiny negative residue for p == q.
    Ok(acc.max(T::zero()))
}

/// Hellinger distance in `[0, 1]`.
///
/// The Bhattacharyya coefficient of a product measure is the product of the
/// per-dimension coefficients, and `H = sqrt(1 − BC)`.
pub fn hellinger<T: Real>(p: &DiagonalGaussian<T>, q: &DiagonalGaussian<T>) -> Result<T> {
    check_dim(p.dim(), q.dim())?;
    let two = T::lit(2.0);
    let mut log_bc = T::zero();
    for d in 0..p.dim() {
        let (mp, sp) = (p.means[d], p.stddevs[d]);
        let (mq, sq) = (q.means[d], q.stddevs[d]);
        let var_sum = sp * sp + sq * sq;
        let dm = mp - mq;
        log_bc = log_bc + T::lit(0.5) * (two * sp * sq / var_sum).ln()
            - dm * dm / (T::lit(4.0) * var_sum);
    }
    let h2 = T::one() - log_bc.exp();
    Ok(h2.max(T::zero()).min(T::one()).sqrt())
}

/// Which closed-form distance a behavioral distance matrix is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    #[default]
    Wasserstein,
    Hellinger,
}

impl DistanceKind {
    pub fn eval<T: Real>(self, p: &DiagonalGaussian<T>, q: &DiagonalGaussian<T>) -> Result<T> {
        match self {
            DistanceKind::Wasserstein => wasserstein2(p, q),
            DistanceKind::Hellinger => hellinger(p, q),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Wasserstein => "wasserstein",
            DistanceKind::Hellinger => "hellinger",
        }
    }
}
