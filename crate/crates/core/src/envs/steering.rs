use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_actions, clamp_action, AgentState, Environment, Transition, DT, HORIZON};
use crate::distributions::{DiagonalGaussian, STDDEV_FLOOR};
use crate::error::{Error, Result};
use crate::policies::Behavior;

fn default_horizon() -> usize {
    HORIZON
}
fn default_threshold() -> f64 {
    0.05
}
fn default_rate() -> f64 {
    1.0
}
fn default_range() -> f64 {
    std::f64::consts::FRAC_PI_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringConfig {
    pub n_agents: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Orientation error (rad) below which the target counts as reached.
    #[serde(default = "default_threshold")]
    pub reach_threshold: f64,
    /// Turn rate (rad/s) when every agent pushes at full force in the
    /// rotating direction.
    #[serde(default = "default_rate")]
    pub max_turn_rate: f64,
    /// Orientations and targets are drawn from `[-range, range]`.
    #[serde(default = "default_range")]
    pub orientation_range: f64,
}

impl SteeringConfig {
    pub fn new(n_agents: usize) -> Self {
        Self {
            n_agents,
            horizon: HORIZON,
            reach_threshold: default_threshold(),
            max_turn_rate: default_rate(),
            orientation_range: default_range(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 || self.n_agents % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "differential steering needs an even number of agents, got {}",
                self.n_agents
            )));
        }
        if self.horizon == 0 || !(self.reach_threshold > 0.0) || !(self.max_turn_rate > 0.0) || !(self.orientation_range > 0.0) {
            return Err(Error::InvalidConfig("steering parameters must be positive".into()));
        }
        Ok(())
    }

    /// Hidden side of every agent: the first half pushes counter-clockwise
    /// (+1), the second half clockwise (−1).
    pub fn sides(&self) -> Vec<f64> {
        (0..self.n_agents)
            .map(|i| if i < self.n_agents / 2 { 1.0 } else { -1.0 })
            .collect()
    }
}

/// A boat rowed by agents on both sides. Each agent applies a 1D force whose
/// turning effect depends on a side it cannot observe; all agents observe only
/// `(orientation, target orientation)` and share the reward, which is the
/// reduction in absolute orientation error. The target is redrawn once reached.
#[derive(Debug, Clone)]
pub struct DifferentialSteering {
    config: SteeringConfig,
    sides: Vec<f64>,
    orientation: f64,
    target: f64,
    rate: f64,
    rng: ChaCha8Rng,
    t: usize,
}

impl DifferentialSteering {
    pub fn new(config: SteeringConfig) -> Result<Self> {
        config.validate()?;
        let sides = config.sides();
        Ok(Self {
            config,
            sides,
            orientation: 0.0,
            target: 0.0,
            rate: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
        })
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Net torque for the given clamped forces.
    pub fn net_torque(&self, actions: &[Vec<f64>]) -> f64 {
        self.sides
            .iter()
            .zip(actions)
            .map(|(s, a)| s * clamp_action(a[0]))
            .sum()
    }

    fn draw_angle(&mut self) -> f64 {
        let r = self.config.orientation_range;
        self.rng.random_range(-r..r)
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        vec![vec![self.orientation, self.target]; self.sides.len()]
    }
}

impl Environment for DifferentialSteering {
    fn n_agents(&self) -> usize {
        self.sides.len()
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.orientation = self.draw_angle();
        self.target = self.draw_angle();
        self.rate = 0.0;
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Transition> {
        let n = self.sides.len();
        check_actions(actions, n, 1)?;
        let before = (self.target - self.orientation).abs();
        self.rate = self.config.max_turn_rate * self.net_torque(actions) / n as f64;
        self.orientation += self.rate * DT;
        let after = (self.target - self.orientation).abs();
        if after < self.config.reach_threshold {
            self.target = self.draw_angle();
        }
        self.t += 1;
        Ok(Transition {
            observations: self.observe(),
            rewards: vec![before - after; n],
            done: self.t >= self.config.horizon,
        })
    }

    /// Reports the boat, not the rowers: `position = (orientation, target)`,
    /// `velocity = (turn rate, 0)` for every agent.
    fn agent_states(&self) -> Vec<AgentState> {
        vec![
            AgentState {
                position: [self.orientation, self.target],
                velocity: [self.rate, 0.0],
            };
            self.sides.len()
        ]
    }
}

/// Scripted optimum: every agent pushes at full force toward the target
/// through its own side, with minimal spread. Agents on opposite sides then
/// always sit at distance 2.
#[derive(Debug, Clone)]
pub struct SteeringOptimal {
    sides: Vec<f64>,
}

impl SteeringOptimal {
    pub fn new(config: &SteeringConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { sides: config.sides() })
    }
}

impl Behavior for SteeringOptimal {
    fn n_agents(&self) -> usize {
        self.sides.len()
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn evaluate(&self, agent: usize, observation: &[f64]) -> Result<DiagonalGaussian<f64>> {
        if agent >= self.sides.len() {
            return Err(Error::AgentOutOfRange {
                index: agent,
                n: self.sides.len(),
            });
        }
        if observation.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: observation.len(),
            });
        }
        let direction = if observation[1] >= observation[0] { 1.0 } else { -1.0 };
        DiagonalGaussian::new(vec![self.sides[agent] * direction], vec![STDDEV_FLOOR])
    }
}
