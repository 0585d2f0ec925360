//! Steering training toward a diversity set-point.
//!
//! The constraint is soft: a quadratic penalty on the SND measured over a set
//! of observations is added to the policy loss. Its gradient flows through the
//! closed-form W2 terms into every agent's mean and stddev.

use serde::{Deserialize, Serialize};

use crate::distance::BehavioralDistanceMatrix;
use crate::distributions::{wasserstein2, DiagonalGaussian};
use crate::error::{Error, Result};
use crate::metrics::{snd, snd_redundancy_formula};
use crate::policies::PolicySet;
use crate::scalar::{Exact, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Penalize any deviation from the set-point.
    #[default]
    Equality,
    /// Penalize only SND below the set-point.
    LowerBound,
}

fn default_weight() -> f64 {
    0.3
}
fn default_warmup() -> f64 {
    0.1
}
fn default_samples() -> usize {
    16
}

/// Desired SND and how hard to push toward it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversityTarget {
    #[serde(default)]
    pub mode: TargetMode,
    pub value: f64,
    /// Penalty weight once warm-up is over.
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Fraction of training over which the weight ramps linearly from zero.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    /// Joint observations drawn from the training batch per penalty step.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl DiversityTarget {
    pub fn equality(value: f64) -> Self {
        Self {
            mode: TargetMode::Equality,
            value,
            weight: default_weight(),
            warmup_fraction: default_warmup(),
            samples: default_samples(),
        }
    }

    pub fn lower_bound(value: f64) -> Self {
        Self { mode: TargetMode::LowerBound, ..Self::equality(value) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.value >= 0.0) || !self.value.is_finite() {
            return Err(Error::InvalidConfig("diversity target must be finite and >= 0".into()));
        }
        if !(self.weight >= 0.0) || !(0.0..=1.0).contains(&self.warmup_fraction) || self.samples == 0 {
            return Err(Error::InvalidConfig("bad diversity penalty schedule".into()));
        }
        Ok(())
    }

    /// Penalty weight at `iteration` of `total`.
    pub fn weight_at(&self, iteration: usize, total: usize) -> f64 {
        let ramp = self.warmup_fraction * total as f64;
        if ramp <= 0.0 {
            return self.weight;
        }
        self.weight * ((iteration as f64 + 1.0) / ramp).min(1.0)
    }

    fn penalty_of(&self, measured: f64) -> (f64, f64) {
        let gap = match self.mode {
            TargetMode::Equality => measured - self.value,
            TargetMode::LowerBound => (measured - self.value).min(0.0),
        };
        // (penalty, d penalty / d snd)
        (gap * gap, 2.0 * gap)
    }
}

/// Squared violation of the set-point by the matrix's SND.
pub fn diversity_penalty<T: Real>(d: &BehavioralDistanceMatrix<T>, target: &DiversityTarget) -> Result<T> {
    let measured = snd(d)?;
    let t = T::lit(target.value);
    let gap = match target.mode {
        TargetMode::Equality => measured - t,
        TargetMode::LowerBound => (measured - t).min(T::zero()),
    };
    Ok(gap * gap)
}

/// Set-point for `n` agents that should split into `clusters` behavioral
/// groups at mutual distance `x`.
pub fn optimal_snd_for_clusters<T: Exact>(x: T, n: usize, clusters: usize) -> Result<T> {
    snd_redundancy_formula(x, n, clusters)
}

/// Penalty value and its gradient for every parameter block.
#[derive(Debug, Clone)]
pub struct PenaltyGradient {
    pub snd: f64,
    pub penalty: f64,
    /// `d penalty / d block`, one vector per block.
    pub grads: Vec<Vec<f64>>,
}

/// Evaluates SND over `observations` (each one is fed to every agent, as in a
/// behavioral distance) and differentiates the penalty.
pub fn penalty_gradient(policies: &PolicySet, observations: &[&[f64]], target: &DiversityTarget) -> Result<PenaltyGradient> {
    use crate::policies::Behavior;
    let n = policies.n_agents();
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if observations.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let block_len = policies.shape().block_len();
    let mut grads = vec![vec![0.0; block_len]; policies.n_blocks()];
    let mut scratch = policies.scratch();
    let m = observations.len() as f64;
    let pair_scale = 2.0 / (n * (n - 1)) as f64 / m;

    let mut dists: Vec<Vec<DiagonalGaussian<f64>>> = Vec::with_capacity(observations.len());
    let mut total = 0.0;
    for obs in observations {
        let per_agent = (0..n)
            .map(|i| policies.evaluate_with(i, obs, &mut scratch))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..n {
            for j in i + 1..n {
                total += wasserstein2(&per_agent[i], &per_agent[j])?;
            }
        }
        dists.push(per_agent);
    }
    let measured = total * pair_scale;
    let (penalty, slope) = target.penalty_of(measured);
    if slope == 0.0 {
        return Ok(PenaltyGradient { snd: measured, penalty, grads });
    }
    let coef = slope * pair_scale;
    for (obs, per_agent) in observations.iter().zip(&dists) {
        for i in 0..n {
            let dim = per_agent[i].dim();
            let mut dm = vec![0.0; dim];
            let mut ds = vec![0.0; dim];
            for j in (0..n).filter(|&j| j != i) {
                let w = wasserstein2(&per_agent[i], &per_agent[j])?;
                if w == 0.0 {
                    continue;
                }
                for d in 0..dim {
                    dm[d] += coef * (per_agent[i].means()[d] - per_agent[j].means()[d]) / w;
                    ds[d] += coef * (per_agent[i].stddevs()[d] - per_agent[j].stddevs()[d]) / w;
                }
            }
            let b = policies.block_index(i);
            policies.backprop_into(i, obs, &mut scratch, |_| (dm.clone(), ds.clone()), &mut grads[b])?;
        }
    }
    Ok(PenaltyGradient { snd: measured, penalty, grads })
}
