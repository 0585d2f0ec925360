use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_actions, norm, sub, AgentState, Environment, PointMass, Transition, HORIZON, WORKSPACE};
use crate::error::{Error, Result};

fn default_horizon() -> usize {
    HORIZON
}

fn default_separation() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalNavigationConfig {
    /// Goal index of every agent. Goal indices must be `0..k` with each used.
    pub assignment: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Minimum distance between distinct goals, metres.
    #[serde(default = "default_separation")]
    pub min_goal_separation: f64,
}

impl GoalNavigationConfig {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self {
            assignment,
            horizon: HORIZON,
            min_goal_separation: default_separation(),
        }
    }

    /// `n` agents over `goals` distinct goals, with the surplus agents piled
    /// onto goal 0: for `n = 4` this gives `[0,1,2,3]`, `[0,0,1,2]`,
    /// `[0,0,0,1]` and `[0,0,0,0]` for 4, 3, 2 and 1 goals.
    pub fn shared_first(n: usize, goals: usize) -> Result<Self> {
        if goals == 0 || goals > n {
            return Err(Error::InvalidConfig(format!("{goals} goals for {n} agents")));
        }
        let extra = n - goals;
        let assignment = (0..n).map(|i| i.saturating_sub(extra)).collect();
        Ok(Self::new(assignment))
    }

    /// `n` agents, first half on goal 0 and second half on goal 1, generalised
    /// to `clusters` equal groups.
    pub fn clustered(n: usize, clusters: usize) -> Result<Self> {
        if clusters == 0 || n % clusters != 0 {
            return Err(Error::ClustersDoNotDivide { agents: n, clusters });
        }
        let size = n / clusters;
        Ok(Self::new((0..n).map(|i| i / size).collect()))
    }

    pub fn goal_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.assignment.len();
        if n < 2 {
            return Err(Error::TooFewAgents(n));
        }
        let k = self.goal_count();
        for g in 0..k {
            if !self.assignment.contains(&g) {
                return Err(Error::InvalidConfig(format!("goal {g} has no agent assigned")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        // k points with this spacing must fit comfortably in the workspace
        let sep = self.min_goal_separation;
        if !(sep >= 0.0) || (k as f64) * sep * sep > 0.5 * WORKSPACE * WORKSPACE {
            return Err(Error::InvalidConfig(format!(
                "cannot place {k} goals {sep} m apart"
            )));
        }
        Ok(())
    }
}

/// Every agent moves toward its own goal; it observes the offset to every
/// goal plus its own velocity, and is rewarded by how much closer it got.
#[derive(Debug, Clone)]
pub struct GoalNavigation {
    config: GoalNavigationConfig,
    goals: Vec<[f64; 2]>,
    agents: Vec<PointMass>,
    t: usize,
}

impl GoalNavigation {
    pub fn new(config: GoalNavigationConfig) -> Result<Self> {
        config.validate()?;
        let n = config.assignment.len();
        let k = config.goal_count();
        Ok(Self {
            config,
            goals: vec![[0.0; 2]; k],
            agents: vec![PointMass::default(); n],
            t: 0,
        })
    }

    pub fn config(&self) -> &GoalNavigationConfig {
        &self.config
    }

    pub fn goals(&self) -> &[[f64; 2]] {
        &self.goals
    }

    /// Distance from each agent to its own goal.
    pub fn goal_distances(&self) -> Vec<f64> {
        self.agents
            .iter()
            .zip(&self.config.assignment)
            .map(|(a, &g)| norm(sub(self.goals[g], a.pos)))
            .collect()
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        self.agents
            .iter()
            .map(|a| {
                let mut o = Vec::with_capacity(self.obs_dim());
                for g in &self.goals {
                    o.extend_from_slice(&sub(*g, a.pos));
                }
                o.extend_from_slice(&a.vel);
                o
            })
            .collect()
    }
}

fn uniform_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let h = WORKSPACE / 2.0;
    [rng.random_range(-h..h), rng.random_range(-h..h)]
}

impl Environment for GoalNavigation {
    fn n_agents(&self) -> usize {
        self.agents.len()
    }

    fn obs_dim(&self) -> usize {
        2 * self.goals.len() + 2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sep = self.config.min_goal_separation;
        for g in 0..self.goals.len() {
            self.goals[g] = loop {
                let p = uniform_point(&mut rng);
                if self.goals[..g].iter().all(|q| norm(sub(p, *q)) >= sep) {
                    break p;
                }
            };
        }
        for a in &mut self.agents {
            *a = PointMass {
                pos: uniform_point(&mut rng),
                vel: [0.0; 2],
            };
        }
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<Transition> {
        check_actions(actions, self.n_agents(), 2)?;
        let before = self.goal_distances();
        for (a, act) in self.agents.iter_mut().zip(actions) {
            a.advance([act[0], act[1]], [0.0; 2]);
        }
        let after = self.goal_distances();
        self.t += 1;
        Ok(Transition {
            observations: self.observe(),
            rewards: before.iter().zip(&after).map(|(b, a)| b - a).collect(),
            done: self.t >= self.config.horizon,
        })
    }

    fn agent_states(&self) -> Vec<AgentState> {
        self.agents
            .iter()
            .map(|a| AgentState {
                position: a.pos,
                velocity: a.vel,
            })
            .collect()
    }
}
