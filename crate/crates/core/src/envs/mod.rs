//! Seedable 2D multi-agent tasks.
//!
//! All tasks share the same contract: `reset(seed)` fully determines the
//! initial state and every later random draw, and an episode lasts exactly
//! `horizon()` steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod flocking;
mod goal_navigation;
mod steering;

pub use flocking::{shielding_factor, FlockingConfig, FlockingWind};
pub use goal_navigation::{GoalNavigation, GoalNavigationConfig};
pub use steering::{DifferentialSteering, SteeringConfig, SteeringOptimal};

/// Integration step in seconds.
pub const DT: f64 = 0.1;
/// Default episode length in steps.
pub const HORIZON: usize = 100;
/// Side of the square spawn workspace in metres.
pub const WORKSPACE: f64 = 2.0;
/// Fraction of the velocity error removed per step (first-order lag).
pub const VELOCITY_LAG: f64 = 0.5;
/// Per-component bound on velocity commands (m/s) and steering forces.
pub const ACTION_BOUND: f64 = 1.0;

/// Result of advancing the environment by one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// Kinematic snapshot of one agent, for trajectory dumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

pub trait Environment: Send {
    fn n_agents(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;

    /// Starts a new episode and returns the first joint observation.
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>>;

    /// Applies one action per agent. Actions are clamped to the task bounds.
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Transition>;

    fn agent_states(&self) -> Vec<AgentState>;

    /// Disturbance magnitude; tasks without a disturbance ignore it.
    fn set_wind(&mut self, _magnitude: f64) {}

    fn wind(&self) -> f64 {
        0.0
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn n_agents(&self) -> usize {
        (**self).n_agents()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        (**self).reset(seed)
    }
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Transition> {
        (**self).step(actions)
    }
    fn agent_states(&self) -> Vec<AgentState> {
        (**self).agent_states()
    }
    fn set_wind(&mut self, magnitude: f64) {
        (**self).set_wind(magnitude)
    }
    fn wind(&self) -> f64 {
        (**self).wind()
    }
}

pub(crate) fn check_actions(actions: &[Vec<f64>], n: usize, dim: usize) -> Result<()> {
    if actions.len() != n {
        return Err(Error::AgentCountMismatch {
            env: n,
            policies: actions.len(),
        });
    }
    for a in actions {
        if a.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: a.len(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite action".into()));
        }
    }
    Ok(())
}

pub(crate) fn clamp_action(v: f64) -> f64 {
    v.clamp(-ACTION_BOUND, ACTION_BOUND)
}

/// Velocity-controlled point mass.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct PointMass {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl PointMass {
    /// Relaxes the velocity toward the command and integrates position with an
    /// extra additive drift (e.g. wind).
    pub fn advance(&mut self, command: [f64; 2], drift: [f64; 2]) {
        for d in 0..2 {
            self.vel[d] += VELOCITY_LAG * (clamp_action(command[d]) - self.vel[d]);
            self.pos[d] += (self.vel[d] + drift[d]) * DT;
        }
    }
}

pub(crate) fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Piecewise-constant disturbance over training iterations. Iterations not
/// covered by any interval have zero wind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSchedule {
    pub phases: Vec<WindPhase>,
}

/// Wind of `magnitude` on iterations `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindPhase {
    pub start: usize,
    pub end: usize,
    pub magnitude: f64,
}

impl WindSchedule {
    pub fn new(phases: Vec<WindPhase>) -> Result<Self> {
        let s = Self { phases };
        s.validate()?;
        Ok(s)
    }

    /// Off, on, off, on with the given phase lengths.
    pub fn off_on_off_on(lengths: [usize; 4], magnitude: f64) -> Result<Self> {
        let [a, b, c, d] = lengths;
        Self::new(vec![
            WindPhase {
                start: 0,
                end: a,
                magnitude: 0.0,
            },
            WindPhase {
                start: a,
                end: a + b,
                magnitude,
            },
            WindPhase {
                start: a + b,
                end: a + b + c,
                magnitude: 0.0,
            },
            WindPhase {
                start: a + b + c,
                end: a + b + c + d,
                magnitude,
            },
        ])
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.phases {
            if p.start >= p.end {
                return Err(Error::InvalidConfig(format!(
                    "wind phase {}..{} is empty",
                    p.start, p.end
                )));
            }
            if !(p.magnitude >= 0.0) || !p.magnitude.is_finite() {
                return Err(Error::InvalidConfig("wind magnitude must be finite and >= 0".into()));
            }
        }
        for w in self.phases.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::InvalidConfig("wind phases overlap or are unsorted".into()));
            }
        }
        Ok(())
    }

    pub fn magnitude_at(&self, iteration: usize) -> f64 {
        self.phases
            .iter()
            .find(|p| (p.start..p.end).contains(&iteration))
            .map_or(0.0, |p| p.magnitude)
    }

    /// Last iteration covered by the schedule, exclusive.
    pub fn end(&self) -> usize {
        self.phases.last().map_or(0, |p| p.end)
    }
}
