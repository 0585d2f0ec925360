//! Experiment configuration files (TOML).
//!
//! ```toml
//! name = "goal-nav-4"
//! seeds = [0, 1, 2]
//!
//! [task]
//! kind = "goal_navigation"
//! assignment = [0, 1, 2, 3]
//!
//! [policy]
//! mode = "heterogeneous"
//!
//! [trainer]
//! iterations = 200
//! episodes_per_iteration = 20
//! ```
//!
//! Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use snd_core::envs::{
    DifferentialSteering, Environment, FlockingConfig, FlockingWind, GoalNavigation, GoalNavigationConfig,
    SteeringConfig,
};
use snd_core::policies::{NetworkShape, PolicyMode, StdMode};
use snd_core::training::TrainerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    GoalNavigation(GoalNavigationConfig),
    DifferentialSteering(SteeringConfig),
    Flocking(FlockingConfig),
}

impl TaskConfig {
    pub fn build(&self) -> snd_core::Result<Box<dyn Environment>> {
        Ok(match self {
            TaskConfig::GoalNavigation(c) => Box::new(GoalNavigation::new(c.clone())?),
            TaskConfig::DifferentialSteering(c) => Box::new(DifferentialSteering::new(c.clone())?),
            TaskConfig::Flocking(c) => Box::new(FlockingWind::new(c.clone())?),
        })
    }

    pub fn n_agents(&self) -> usize {
        match self {
            TaskConfig::GoalNavigation(c) => c.assignment.len(),
            TaskConfig::DifferentialSteering(c) => c.n_agents,
            TaskConfig::Flocking(_) => 2,
        }
    }

    /// The same task with `n` agents laid out per `sweep`.
    fn resized(&self, n: usize, clusters: Option<usize>) -> Result<Self> {
        Ok(match self {
            TaskConfig::GoalNavigation(c) => {
                let layout = match clusters {
                    None => GoalNavigationConfig::new((0..n).collect()),
                    Some(k) => GoalNavigationConfig::clustered(n, k)?,
                };
                TaskConfig::GoalNavigation(GoalNavigationConfig { assignment: layout.assignment, ..c.clone() })
            }
            TaskConfig::DifferentialSteering(c) => {
                if clusters.is_some_and(|k| k != 2) {
                    bail!("differential steering always has two clusters");
                }
                TaskConfig::DifferentialSteering(SteeringConfig { n_agents: n, ..c.clone() })
            }
            TaskConfig::Flocking(_) => bail!("flocking has a fixed team of two and cannot be swept"),
        })
    }
}

fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_bound() -> f64 {
    1.0
}
fn default_init_std() -> f64 {
    0.6
}
fn default_mode() -> PolicyMode {
    PolicyMode::Heterogeneous
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_mode")]
    pub mode: PolicyMode,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Bound on action means; `0` selects a linear (unbounded) mean head.
    #[serde(default = "default_bound")]
    pub mean_bound: f64,
    #[serde(default)]
    pub std_mode: StdMode,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            hidden: default_hidden(),
            mean_bound: default_bound(),
            std_mode: StdMode::default(),
            init_std: default_init_std(),
        }
    }
}

impl PolicyConfig {
    pub fn shape(&self, obs_dim: usize, action_dim: usize) -> Result<NetworkShape> {
        if !(self.mean_bound >= 0.0) || !(self.init_std > 0.0) {
            bail!("policy.mean_bound must be >= 0 and policy.init_std > 0");
        }
        let shape = NetworkShape {
            obs_dim,
            action_dim,
            hidden: self.hidden.clone(),
            mean_bound: (self.mean_bound > 0.0).then_some(self.mean_bound),
            std_mode: self.std_mode,
            init_log_std: self.init_std.ln(),
        };
        shape.validate()?;
        Ok(shape)
    }
}

/// Repeats the experiment over team sizes, producing one summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub agents: Vec<usize>,
    /// Number of behavioral clusters; absent means one goal per agent.
    #[serde(default)]
    pub clusters: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub task: TaskConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

/// One concrete training setup of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    /// Subdirectory name; empty without a sweep.
    pub label: String,
    pub task: TaskConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("invalid config")?;
        config.validate().context("invalid config")?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("name must be a non-empty single path component");
        }
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            bail!("seeds must be distinct");
        }
        self.trainer.validate()?;
        for v in self.variants()? {
            let env = v.task.build()?;
            self.policy.shape(env.obs_dim(), env.action_dim())?;
        }
        if self.trainer.wind.is_some() && !matches!(self.task, TaskConfig::Flocking(_)) {
            bail!("a wind schedule only applies to the flocking task");
        }
        Ok(())
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        match &self.sweep {
            None => Ok(vec![Variant { label: String::new(), task: self.task.clone() }]),
            Some(s) => {
                if s.agents.is_empty() {
                    bail!("sweep.agents must not be empty");
                }
                s.agents
                    .iter()
                    .map(|&n| Ok(Variant { label: format!("n{n}"), task: self.task.resized(n, s.clusters)? }))
                    .collect()
            }
        }
    }
}
