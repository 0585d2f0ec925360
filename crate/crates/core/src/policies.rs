//! Stochastic Gaussian policies, parameter-shared or per-agent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{DiagonalGaussian, STDDEV_FLOOR};
use crate::error::{Error, Result};
use crate::nn::{Mlp, Workspace};

/// Anything that maps `(agent, observation)` to an action distribution.
pub trait Behavior {
    fn n_agents(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn evaluate(&self, agent: usize, observation: &[f64]) -> Result<DiagonalGaussian<f64>>;
}

impl<B: Behavior + ?Sized> Behavior for &B {
    fn n_agents(&self) -> usize {
        (**self).n_agents()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn evaluate(&self, agent: usize, observation: &[f64]) -> Result<DiagonalGaussian<f64>> {
        (**self).evaluate(agent, observation)
    }
}

/// Observation-independent distribution per agent.
#[derive(Debug, Clone)]
pub struct ConstantBehavior {
    outputs: Vec<DiagonalGaussian<f64>>,
}

impl ConstantBehavior {
    pub fn new(outputs: Vec<DiagonalGaussian<f64>>) -> Result<Self> {
        let dim = outputs.first().ok_or(Error::TooFewAgents(0))?.dim();
        if let Some(bad) = outputs.iter().find(|g| g.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.dim() });
        }
        Ok(Self { outputs })
    }
}

impl Behavior for ConstantBehavior {
    fn n_agents(&self) -> usize {
        self.outputs.len()
    }
    fn action_dim(&self) -> usize {
        self.outputs[0].dim()
    }
    fn evaluate(&self, agent: usize, _observation: &[f64]) -> Result<DiagonalGaussian<f64>> {
        self.outputs
            .get(agent)
            .cloned()
            .ok_or(Error::AgentOutOfRange { index: agent, n: self.outputs.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    /// One parameter block shared by every agent.
    Homogeneous,
    /// An independent parameter block per agent.
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// Learnable log-stddev per action dimension, independent of the input.
    #[default]
    StateIndependent,
    /// Network emits the log-stddev next to the mean.
    NetworkOutput,
}

fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_log_std() -> f64 {
    0.6f64.ln()
}

/// Architecture shared by every block of a policy set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    pub obs_dim: usize,
    pub action_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Means are squashed to `[-bound, bound]` by a scaled tanh when set;
    /// otherwise the mean head is linear.
    #[serde(default)]
    pub mean_bound: Option<f64>,
    #[serde(default)]
    pub std_mode: StdMode,
    #[serde(default = "default_log_std")]
    pub init_log_std: f64,
}

impl NetworkShape {
    pub fn new(obs_dim: usize, action_dim: usize) -> Self {
        Self {
            obs_dim,
            action_dim,
            hidden: default_hidden(),
            mean_bound: Some(1.0),
            std_mode: StdMode::StateIndependent,
            init_log_std: default_log_std(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.action_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("network dimensions must be positive".into()));
        }
        if let Some(b) = self.mean_bound {
            if !(b > 0.0) {
                return Err(Error::InvalidConfig("mean bound must be positive".into()));
            }
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::InvalidConfig("initial log-stddev must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn mlp(&self) -> Mlp {
        let out = match self.std_mode {
            StdMode::StateIndependent => self.action_dim,
            StdMode::NetworkOutput => 2 * self.action_dim,
        };
        let mut sizes = vec![self.obs_dim];
        sizes.extend(&self.hidden);
        sizes.push(out);
        Mlp::new(sizes)
    }

    /// Parameters in one block: network, then the log-stddev vector when it
    /// is state independent.
    pub fn block_len(&self) -> usize {
        let extra = match self.std_mode {
            StdMode::StateIndependent => self.action_dim,
            StdMode::NetworkOutput => 0,
        };
        self.mlp().n_params() + extra
    }

    /// Fresh block from a seed.
    pub fn init_block(&self, seed: u64) -> Vec<f64> {
        let mlp = self.mlp();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = mlp.init(&mut rng, 0.01);
        match self.std_mode {
            StdMode::StateIndependent => {
                block.extend(std::iter::repeat_n(self.init_log_std, self.action_dim))
            }
            StdMode::NetworkOutput => {
                // log-std biases are the last action_dim entries of the network
                let n = block.len();
                for b in &mut block[n - self.action_dim..] {
                    *b = self.init_log_std;
                }
            }
        }
        block
    }
}

/// Pre-activation head outputs and the resulting Gaussian parameters.
struct HeadOutput {
    raw_mean: Vec<f64>,
    mean: Vec<f64>,
    log_std: Vec<f64>,
    std: Vec<f64>,
}

/// Reusable evaluation state for one network shape.
pub struct PolicyScratch {
    ws: Workspace,
    grad_out: Vec<f64>,
}

/// Policies for `n` agents sharing one network shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySet {
    mode: PolicyMode,
    shape: NetworkShape,
    n_agents: usize,
    blocks: Vec<Vec<f64>>,
    mlp: Mlp,
}

impl PolicySet {
    /// Heterogeneous blocks get distinct seeds derived from `seed`.
    pub fn new(mode: PolicyMode, shape: NetworkShape, n_agents: usize, seed: u64) -> Result<Self> {
        let n_blocks = match mode {
            PolicyMode::Homogeneous => 1,
            PolicyMode::Heterogeneous => n_agents,
        };
        let seeds: Vec<u64> = (0..n_blocks as u64)
            .map(|b| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(b))
            .collect();
        let blocks = seeds.iter().map(|&s| shape.init_block(s)).collect();
        Self::from_blocks(mode, shape, n_agents, blocks)
    }

    /// Heterogeneous set with an explicit initialization seed per agent.
    pub fn with_agent_seeds(shape: NetworkShape, seeds: &[u64]) -> Result<Self> {
        let blocks = seeds.iter().map(|&s| shape.init_block(s)).collect();
        Self::from_blocks(PolicyMode::Heterogeneous, shape, seeds.len(), blocks)
    }

    pub fn from_blocks(mode: PolicyMode, shape: NetworkShape, n_agents: usize, blocks: Vec<Vec<f64>>) -> Result<Self> {
        shape.validate()?;
        if n_agents == 0 {
            return Err(Error::TooFewAgents(0));
        }
        let expected_blocks = match mode {
            PolicyMode::Homogeneous => 1,
            PolicyMode::Heterogeneous => n_agents,
        };
        if blocks.len() != expected_blocks {
            return Err(Error::InvalidConfig(format!(
                "{mode:?} policy for {n_agents} agents needs {expected_blocks} blocks, got {}",
                blocks.len()
            )));
        }
        let len = shape.block_len();
        for b in &blocks {
            if b.len() != len {
                return Err(Error::DimensionMismatch { expected: len, got: b.len() });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("non-finite parameter".into()));
            }
        }
        let mlp = shape.mlp();
        Ok(Self { mode, shape, n_agents, blocks, mlp })
    }

    pub fn mode(&self) -> PolicyMode {
        self.mode
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Parameter block evaluated for `agent`.
    pub fn block_index(&self, agent: usize) -> usize {
        match self.mode {
            PolicyMode::Homogeneous => 0,
            PolicyMode::Heterogeneous => agent,
        }
    }

    pub fn scratch(&self) -> PolicyScratch {
        PolicyScratch {
            ws: self.mlp.workspace(),
            grad_out: vec![0.0; self.mlp.output_dim()],
        }
    }

    fn check(&self, agent: usize, obs: &[f64]) -> Result<()> {
        if agent >= self.n_agents {
            return Err(Error::AgentOutOfRange { index: agent, n: self.n_agents });
        }
        if obs.len() != self.shape.obs_dim {
            return Err(Error::DimensionMismatch { expected: self.shape.obs_dim, got: obs.len() });
        }
        Ok(())
    }

    fn head(&self, block: &[f64], obs: &[f64], scratch: &mut PolicyScratch) -> HeadOutput {
        let a = self.shape.action_dim;
        let net_len = self.mlp.n_params();
        let out = self.mlp.forward(&block[..net_len], obs, &mut scratch.ws);
        let raw_mean = out[..a].to_vec();
        let log_std: Vec<f64> = match self.shape.std_mode {
            StdMode::StateIndependent => block[net_len..net_len + a].to_vec(),
            StdMode::NetworkOutput => out[a..2 * a].to_vec(),
        };
        let mean = match self.shape.mean_bound {
            Some(b) => raw_mean.iter().map(|z| b * z.tanh()).collect(),
            None => raw_mean.clone(),
        };
        let std = log_std.iter().map(|l| l.exp().max(STDDEV_FLOOR)).collect();
        HeadOutput { raw_mean, mean, log_std, std }
    }

    /// Evaluates with caller-provided scratch space (no per-call allocation
    /// of network buffers).
    pub fn evaluate_with(&self, agent: usize, obs: &[f64], scratch: &mut PolicyScratch) -> Result<DiagonalGaussian<f64>> {
        self.check(agent, obs)?;
        let h = self.head(&self.blocks[self.block_index(agent)], obs, scratch);
        DiagonalGaussian::new(h.mean, h.std)
    }

    /// Forward pass followed by backpropagation of `d loss / d mean` and
    /// `d loss / d stddev` (both per action dimension, scaled by `weight`)
    /// into `grad`, which must have block length. Returns the distribution.
    pub fn backprop_into(
        &self,
        agent: usize,
        obs: &[f64],
        scratch: &mut PolicyScratch,
        mut cotangent: impl FnMut(&DiagonalGaussian<f64>) -> (Vec<f64>, Vec<f64>),
        grad: &mut [f64],
    ) -> Result<DiagonalGaussian<f64>> {
        self.check(agent, obs)?;
        let block = &self.blocks[self.block_index(agent)];
        let h = self.head(block, obs, scratch);
        let dist = DiagonalGaussian::new(h.mean.clone(), h.std.clone())?;
        let (d_mean, d_std) = cotangent(&dist);
        let a = self.shape.action_dim;
        let net_len = self.mlp.n_params();
        scratch.grad_out.iter_mut().for_each(|g| *g = 0.0);
        for d in 0..a {
            let dz = match self.shape.mean_bound {
                Some(b) => {
                    let t = h.raw_mean[d].tanh();
                    d_mean[d] * b * (1.0 - t * t)
                }
                None => d_mean[d],
            };
            scratch.grad_out[d] = dz;
            // the floor makes the stddev locally constant
            let d_log_std = if h.log_std[d].exp() > STDDEV_FLOOR { d_std[d] * h.std[d] } else { 0.0 };
            match self.shape.std_mode {
                StdMode::StateIndependent => grad[net_len + d] += d_log_std,
                StdMode::NetworkOutput => scratch.grad_out[a + d] = d_log_std,
            }
        }
        let PolicyScratch { ws, grad_out } = scratch;
        self.mlp.backward(&block[..net_len], ws, grad_out, &mut grad[..net_len]);
        Ok(dist)
    }

    /// Log-density of `action` and its gradient with respect to the block
    /// that `agent` evaluates.
    pub fn log_prob_and_grad(&self, agent: usize, obs: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut scratch = self.scratch();
        let mut grad = vec![0.0; self.shape.block_len()];
        let lp = self.accumulate_log_prob_grad(agent, obs, action, 1.0, &mut scratch, &mut grad)?;
        Ok((lp, grad))
    }

    /// Adds `weight · ∇ log π(action | obs)` into `grad` and returns the
    /// log-density.
    pub fn accumulate_log_prob_grad(
        &self,
        agent: usize,
        obs: &[f64],
        action: &[f64],
        weight: f64,
        scratch: &mut PolicyScratch,
        grad: &mut [f64],
    ) -> Result<f64> {
        if action.len() != self.shape.action_dim {
            return Err(Error::DimensionMismatch { expected: self.shape.action_dim, got: action.len() });
        }
        let dist = self.backprop_into(
            agent,
            obs,
            scratch,
            |g| {
                let mut dm = Vec::with_capacity(g.dim());
                let mut ds = Vec::with_capacity(g.dim());
                for ((&m, &s), &x) in g.means().iter().zip(g.stddevs()).zip(action) {
                    let z = (x - m) / s;
                    dm.push(weight * z / s);
                    ds.push(weight * (z * z - 1.0) / s);
                }
                (dm, ds)
            },
            grad,
        )?;
        dist.log_prob(action)
    }

    /// Gradients of every block accumulated over `(agent, obs, action)`
    /// triples; blocks are shared per [`PolicySet::block_index`].
    pub fn log_prob_grads<'a>(&self, samples: impl IntoIterator<Item = (usize, &'a [f64], &'a [f64])>) -> Result<Vec<Vec<f64>>> {
        let mut grads = vec![vec![0.0; self.shape.block_len()]; self.n_blocks()];
        let mut scratch = self.scratch();
        for (agent, obs, action) in samples {
            let b = self.block_index(agent);
            self.accumulate_log_prob_grad(agent, obs, action, 1.0, &mut scratch, &mut grads[b])?;
        }
        Ok(grads)
    }

    /// Same policies with every block replaced by a copy of block `k`
    /// (heterogeneous) or broadcast from the shared block (homogeneous).
    pub fn to_heterogeneous(&self) -> Result<Self> {
        let blocks = (0..self.n_agents).map(|i| self.blocks[self.block_index(i)].clone()).collect();
        Self::from_blocks(PolicyMode::Heterogeneous, self.shape.clone(), self.n_agents, blocks)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            mode: self.mode,
            n_agents: self.n_agents,
            shape: self.shape.clone(),
            blocks: self.blocks.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("not a policy checkpoint: {:?}", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", c.version)));
        }
        Self::from_blocks(c.mode, c.shape, c.n_agents, c.blocks)
    }
}

impl Behavior for PolicySet {
    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn action_dim(&self) -> usize {
        self.shape.action_dim
    }

    fn evaluate(&self, agent: usize, observation: &[f64]) -> Result<DiagonalGaussian<f64>> {
        self.evaluate_with(agent, observation, &mut self.scratch())
    }
}

pub const CHECKPOINT_FORMAT: &str = "snd-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON checkpoint of a [`PolicySet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub mode: PolicyMode,
    pub n_agents: usize,
    pub shape: NetworkShape,
    pub blocks: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}
