use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_actions, norm, sub, AgentState, Environment, PointMass, Transition, HORIZON};
use crate::error::{Error, Result};

/// Agent 0 deflects wind; agent 1 benefits when it sits downwind of agent 0.
pub const SHIELD_AGENT: usize = 0;
pub const SHIELDED_AGENT: usize = 1;

fn default_horizon() -> usize {
    HORIZON
}
fn default_speed() -> f64 {
    0.5
}
fn default_spacing() -> f64 {
    1.0
}
fn default_wind_cost() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlockingConfig {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Desired northward speed, m/s.
    #[serde(default = "default_speed")]
    pub desired_speed: f64,
    /// Desired inter-agent distance, m.
    #[serde(default = "default_spacing")]
    pub desired_distance: f64,
    /// Wind speed (m/s, southward drift at full exposure). Zero disables wind.
    #[serde(default)]
    pub wind: f64,
    /// Reward lost per step per m/s of perceived wind.
    #[serde(default = "default_wind_cost")]
    pub wind_cost: f64,
}

impl Default for FlockingConfig {
    fn default() -> Self {
        Self {
            horizon: HORIZON,
            desired_speed: default_speed(),
            desired_distance: default_spacing(),
            wind: 0.0,
            wind_cost: default_wind_cost(),
        }
    }
}

impl FlockingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || !(self.desired_distance > 0.0) {
            return Err(Error::InvalidConfig("flocking horizon and spacing must be positive".into()));
        }
        if !(self.wind >= 0.0) || !(self.wind_cost >= 0.0) || !self.desired_speed.is_finite() {
            return Err(Error::InvalidConfig("flocking wind parameters must be non-negative".into()));
        }
        Ok(())
    }
}

/// Fraction of the wind felt by the shielded agent, in `[0, 1]`.
///
/// Zero when it is directly downwind (south) of the shield, rising linearly
/// with the angle off that line and saturating at one from the horizontal
/// onward.
pub fn shielding_factor(shield: [f64; 2], shielded: [f64; 2]) -> f64 {
    let r = sub(shielded, shield);
    let len = norm(r);
    if len == 0.0 {
        return 1.0;
    }
    // angle between r and the wind direction (0, -1)
    let angle = (-r[1] / len).clamp(-1.0, 1.0).acos();
    (angle / FRAC_PI_2).min(1.0)
}

/// Two agents track a northward velocity while holding a fixed spacing; a
/// southward wind, when enabled, costs reward in proportion to the wind each
/// agent perceives.
#[derive(Debug, Clone)]
pub struct FlockingWind {
    config: FlockingConfig,
    agents: [PointMass; 2],
    t: usize,
}

impl FlockingWind {
    pub fn new(config: FlockingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            agents: [PointMass::default(); 2],
            t: 0,
        })
    }

    pub fn config(&self) -> &FlockingConfig {
        &self.config
    }

    /// Perceived wind fraction per agent.
    pub fn exposure(&self) -> [f64; 2] {
        [
            1.0,
            shielding_factor(self.agents[SHIELD_AGENT].pos, self.agents[SHIELDED_AGENT].pos),
        ]
    }

    fn drift(&self, exposure: [f64; 2]) -> [[f64; 2]; 2] {
        let w = self.config.wind;
        [[0.0, -w * exposure[0]], [0.0, -w * exposure[1]]]
    }

    fn actual_velocity(&self, i: usize, drift: [f64; 2]) -> [f64; 2] {
        let v = self.agents[i].vel;
        [v[0] + drift[0], v[1] + drift[1]]
    }

    fn errors(&self, vels: [[f64; 2]; 2]) -> (f64, f64) {
        let desired = [0.0, self.config.desired_speed];
        let velocity = norm(sub(vels[0], desired)) + norm(sub(vels[1], desired));
        let spacing = (norm(sub(self.agents[0].pos, self.agents[1].pos)) - self.config.desired_distance).abs();
        (velocity, spacing)
    }

    fn velocities(&self) -> [[f64; 2]; 2] {
        let d = self.drift(self.exposure());
        [self.actual_velocity(0, d[0]), self.actual_velocity(1, d[1])]
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        let vels = self.velocities();
        (0..2)
            .map(|i| {
                let j = 1 - i;
                let rel_p = sub(self.agents[j].pos, self.agents[i].pos);
                let rel_v = sub(vels[j], vels[i]);
                vec![vels[i][0], vels[i][1], rel_p[0], rel_p[1], rel_v[0], rel_v[1]]
            })
            .collect()
    }
}

impl Environment for FlockingWind {
    fn n_agents(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        6
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle = rng.random_range(-FRAC_PI_8..=FRAC_PI_8);
        let shield_left: bool = rng.random();
        let half = 0.5 * self.config.desired_distance;
        let offset = [half * angle.cos(), half * angle.sin()];
        let (left, right) = ([-offset[0], -offset[1]], offset);
        let (shield, other) = if shield_left { (left, right) } else { (right, left) };
        self.agents[SHIELD_AGENT] = PointMass { pos: shield, vel: [0.0; 2] };
        self.agents[SHIELDED_AGENT] = PointMass { pos: other, vel: [0.0; 2] };
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Transition> {
        check_actions(actions, 2, 2)?;
        let (v_before, s_before) = self.errors(self.velocities());
        let drift = self.drift(self.exposure());
        for (i, act) in actions.iter().enumerate() {
            self.agents[i].advance([act[0], act[1]], drift[i]);
        }
        let exposure = self.exposure();
        let (v_after, s_after) = self.errors(self.velocities());
        let wind_term = if self.config.wind == 0.0 {
            0.0
        } else {
            -self.config.wind_cost * self.config.wind * (exposure[0] + exposure[1])
        };
        let r = (v_before - v_after) + (s_before - s_after) + wind_term;
        self.t += 1;
        Ok(Transition {
            observations: self.observe(),
            rewards: vec![r, r],
            done: self.t >= self.config.horizon,
        })
    }

    fn agent_states(&self) -> Vec<AgentState> {
        let vels = self.velocities();
        (0..2)
            .map(|i| AgentState {
                position: self.agents[i].pos,
                velocity: vels[i],
            })
            .collect()
    }

    fn set_wind(&mut self, magnitude: f64) {
        self.config.wind = magnitude.max(0.0);
    }

    fn wind(&self) -> f64 {
        self.config.wind
    }
}
