//! Executing behaviors in environments.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::policies::Behavior;

/// One joint timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Observation of every agent before acting, as seen by its policy.
    pub observations: Vec<Vec<f64>>,
    /// Raw (unclamped) sampled actions.
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

/// Joint observations (with actions and rewards) from whole episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    steps: Vec<StepRecord>,
    episode_starts: Vec<usize>,
    n_agents: usize,
    seed: u64,
}

impl RolloutBatch {
    /// Wraps externally produced records; every record must hold `n_agents`
    /// observations.
    pub fn new(steps: Vec<StepRecord>, episode_starts: Vec<usize>, n_agents: usize, seed: u64) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(bad) = steps.iter().find(|s| s.observations.len() != n_agents) {
            return Err(Error::AgentCountMismatch { env: bad.observations.len(), policies: n_agents });
        }
        if episode_starts.first() != Some(&0) || episode_starts.windows(2).any(|w| w[0] >= w[1]) || episode_starts.last().is_some_and(|&s| s >= steps.len()) {
            return Err(Error::InvalidSample("bad episode boundaries".into()));
        }
        Ok(Self { steps, episode_starts, n_agents, seed })
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// `|B|`, the number of joint observations.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn episodes(&self) -> usize {
        self.episode_starts.len()
    }

    /// Index ranges of each episode within [`RolloutBatch::steps`].
    pub fn episode_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ends: Vec<usize> = self.episode_starts[1..].to_vec();
        ends.push(self.steps.len());
        self.episode_starts.iter().zip(ends).map(|(&s, e)| s..e).collect()
    }

    /// Per-episode return, averaged over agents.
    pub fn episode_returns(&self) -> Vec<f64> {
        self.episode_ranges()
            .into_iter()
            .map(|r| {
                self.steps[r]
                    .iter()
                    .map(|s| s.rewards.iter().sum::<f64>() / self.n_agents as f64)
                    .sum()
            })
            .collect()
    }

    /// The same records repeated twice; distances are unchanged by this.
    pub fn doubled(&self) -> Self {
        let mut steps = self.steps.clone();
        steps.extend(self.steps.iter().cloned());
        let offset = self.steps.len();
        let mut starts = self.episode_starts.clone();
        starts.extend(self.episode_starts.iter().map(|s| s + offset));
        Self { steps, episode_starts: starts, n_agents: self.n_agents, seed: self.seed }
    }
}

/// How to run episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Half-width of uniform noise added to each observation component
    /// before the policy sees it. Zero disables noise.
    pub obs_noise: f64,
    /// Act with the distribution means instead of sampling.
    pub deterministic: bool,
}

impl RolloutOptions {
    pub fn new(episodes: usize, seed: u64) -> Self {
        Self { episodes, seed, obs_noise: 0.0, deterministic: false }
    }
}

/// Independent random streams derived from one seed.
pub(crate) struct Streams {
    pub env: ChaCha8Rng,
    pub action: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let mk = |stream| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream);
            r
        };
        Self { env: mk(1), action: mk(2), noise: mk(3) }
    }
}

/// Runs `options.episodes` full episodes. Deterministic in `options.seed`.
pub fn rollout<E, B>(env: &mut E, behavior: &B, options: RolloutOptions) -> Result<RolloutBatch>
where
    E: Environment + ?Sized,
    B: Behavior + ?Sized,
{
    if env.n_agents() != behavior.n_agents() {
        return Err(Error::AgentCountMismatch { env: env.n_agents(), policies: behavior.n_agents() });
    }
    if env.horizon() == 0 {
        return Err(Error::InvalidConfig("episode horizon must be positive".into()));
    }
    if options.episodes == 0 {
        return Err(Error::InvalidConfig("need at least one episode".into()));
    }
    if !(options.obs_noise >= 0.0) || !options.obs_noise.is_finite() {
        return Err(Error::InvalidConfig(format!("observation noise {} must be >= 0", options.obs_noise)));
    }
    let mut streams = Streams::new(options.seed);
    let mut steps = Vec::with_capacity(options.episodes * env.horizon());
    let mut starts = Vec::with_capacity(options.episodes);
    for _ in 0..options.episodes {
        starts.push(steps.len());
        let mut obs = env.reset(streams.env.next_u64());
        loop {
            if options.obs_noise > 0.0 {
                let d = options.obs_noise;
                for o in obs.iter_mut().flat_map(|o| o.iter_mut()) {
                    *o += streams.noise.random_range(-d..=d);
                }
            }
            let mut actions = Vec::with_capacity(obs.len());
            for (agent, o) in obs.iter().enumerate() {
                let dist = behavior.evaluate(agent, o)?;
                let a: Vec<f64> = if options.deterministic {
                    dist.means().to_vec()
                } else {
                    dist.means()
                        .iter()
                        .zip(dist.stddevs())
                        .map(|(m, s)| m + s * streams.action.sample::<f64, _>(StandardNormal))
                        .collect()
                };
                actions.push(a);
            }
            let tr = env.step(&actions)?;
            steps.push(StepRecord { observations: obs, actions, rewards: tr.rewards });
            obs = tr.observations;
            if tr.done {
                break;
            }
        }
    }
    RolloutBatch::new(steps, starts, env.n_agents(), options.seed)
}

/// Samples `episodes` on-policy episodes; the observation support for
/// behavioral distances.
pub fn collect_batch<E, B>(env: &mut E, policies: &B, episodes: usize, seed: u64) -> Result<RolloutBatch>
where
    E: Environment + ?Sized,
    B: Behavior + ?Sized,
{
    rollout(env, policies, RolloutOptions::new(episodes, seed))
}

/// One episode as CSV rows `t,agent,x,y,vx,vy,reward` (with header).
pub fn trajectory_csv<E, B>(env: &mut E, behavior: &B, seed: u64) -> Result<String>
where
    E: Environment + ?Sized,
    B: Behavior + ?Sized,
{
    if env.n_agents() != behavior.n_agents() {
        return Err(Error::AgentCountMismatch { env: env.n_agents(), policies: behavior.n_agents() });
    }
    let mut streams = Streams::new(seed);
    let mut obs = env.reset(streams.env.next_u64());
    let mut out = String::from("t,agent,x,y,vx,vy,reward\n");
    let mut t = 0;
    loop {
        let mut actions = Vec::with_capacity(obs.len());
        for (agent, o) in obs.iter().enumerate() {
            let dist = behavior.evaluate(agent, o)?;
            actions.push(
                dist.means()
                    .iter()
                    .zip(dist.stddevs())
                    .map(|(m, s)| m + s * streams.action.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
        }
        let tr = env.step(&actions)?;
        t += 1;
        for (agent, (s, r)) in env.agent_states().iter().zip(&tr.rewards).enumerate() {
            out.push_str(&format!(
                "{t},{agent},{},{},{},{},{r}\n",
                s.position[0], s.position[1], s.velocity[0], s.velocity[1]
            ));
        }
        obs = tr.observations;
        if tr.done {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{GoalNavigation, GoalNavigationConfig};
    use crate::policies::{PolicyMode, PolicySet, NetworkShape};

    fn setup() -> (GoalNavigation, PolicySet) {
        let env = GoalNavigation::new(GoalNavigationConfig::new(vec![0, 1])).unwrap();
        let pol = PolicySet::new(PolicyMode::Heterogeneous, NetworkShape::new(env.obs_dim(), 2), 2, 0).unwrap();
        (env, pol)
    }

    #[test]
    fn batch_shape() {
        let (mut env, pol) = setup();
        let b = collect_batch(&mut env, &pol, 1, 3).unwrap();
        assert_eq!(b.len(), 100);
        assert!(b.steps().iter().all(|s| s.observations.len() == 2));
        let b3 = collect_batch(&mut env, &pol, 3, 3).unwrap();
        assert!(b3.len() > b.len());
        assert_eq!(b3.episode_ranges().len(), 3);
    }

    #[test]
    fn same_seed_same_batch() {
        let (mut env, pol) = setup();
        let a = collect_batch(&mut env, &pol, 2, 17).unwrap();
        let b = collect_batch(&mut env, &pol, 2, 17).unwrap();
        assert_eq!(a, b);
        let c = collect_batch(&mut env, &pol, 2, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_requests() {
        let (mut env, pol) = setup();
        assert!(collect_batch(&mut env, &pol, 0, 1).is_err());
        let three = PolicySet::new(PolicyMode::Heterogeneous, NetworkShape::new(env.obs_dim(), 2), 3, 0).unwrap();
        assert!(matches!(collect_batch(&mut env, &three, 1, 1), Err(Error::AgentCountMismatch { .. })));
        let opts = RolloutOptions { obs_noise: -0.1, ..RolloutOptions::new(1, 0) };
        assert!(rollout(&mut env, &pol, opts).is_err());
        let mut short = GoalNavigation::new(GoalNavigationConfig { horizon: 0, ..GoalNavigationConfig::new(vec![0, 1]) });
        assert!(short.is_err());
        short = GoalNavigation::new(GoalNavigationConfig::new(vec![0, 1]));
        assert!(short.is_ok());
    }

    #[test]
    fn zero_noise_is_clean() {
        let (mut env, pol) = setup();
        let clean = rollout(&mut env, &pol, RolloutOptions::new(2, 5)).unwrap();
        let zero = rollout(&mut env, &pol, RolloutOptions { obs_noise: 0.0, ..RolloutOptions::new(2, 5) }).unwrap();
        assert_eq!(clean, zero);
        let noisy = rollout(&mut env, &pol, RolloutOptions { obs_noise: 0.5, ..RolloutOptions::new(2, 5) }).unwrap();
        assert_ne!(clean.steps()[0].observations, noisy.steps()[0].observations);
    }

    #[test]
    fn trajectory_dump() {
        let (mut env, pol) = setup();
        let csv = trajectory_csv(&mut env, &pol, 1).unwrap();
        assert_eq!(csv.lines().count(), 1 + 100 * 2);
        assert!(csv.starts_with("t,agent,x,y,vx,vy,reward\n1,0,"));
    }
}
