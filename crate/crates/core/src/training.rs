//! On-policy clipped policy-gradient training with per-block critics.
//!
//! Each iteration samples fresh episodes, estimates advantages with GAE,
//! applies a few epochs of minibatch updates to the clipped surrogate, and
//! then measures SND and HSE on a separate evaluation batch. In homogeneous
//! mode all agents' samples update the single shared block; in heterogeneous
//! mode each agent's samples update its own block only.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{penalty_gradient, DiversityTarget};
use crate::distance::{agent_contributions, collect_batch, distance_matrix};
use crate::distributions::DistanceKind;
use crate::envs::{Environment, FlockingConfig, FlockingWind, WindSchedule};
use crate::error::{Error, Result};
use crate::metrics::{hse, snd};
use crate::nn::{clip_norm, Adam, Mlp};
use crate::policies::{NetworkShape, PolicyMode, PolicySet};
use crate::rollout::{rollout, RolloutBatch, RolloutOptions};
use crate::DistanceMatrix;

fn d_iterations() -> usize {
    300
}
fn d_episodes() -> usize {
    50
}
fn d_gamma() -> f64 {
    0.99
}
fn d_lambda() -> f64 {
    0.9
}
fn d_clip() -> f64 {
    0.2
}
fn d_lr() -> f64 {
    3e-4
}
fn d_minibatch() -> usize {
    4096
}
fn d_epochs() -> usize {
    5
}
fn d_grad_norm() -> f64 {
    0.5
}
fn d_measure() -> usize {
    1
}
fn d_eval_episodes() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_episodes")]
    pub episodes_per_iteration: usize,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "d_clip")]
    pub clip_epsilon: f64,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    /// Agent-level samples per gradient step.
    #[serde(default = "d_minibatch")]
    pub minibatch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_grad_norm")]
    pub max_grad_norm: f64,
    #[serde(default)]
    pub seed: u64,
    /// Measure SND/HSE every this many iterations (and always on the last).
    #[serde(default = "d_measure")]
    pub measure_every: usize,
    #[serde(default = "d_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub distance: DistanceKind,
    #[serde(default)]
    pub wind: Option<WindSchedule>,
    #[serde(default)]
    pub diversity: Option<DiversityTarget>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            iterations: d_iterations(),
            episodes_per_iteration: d_episodes(),
            gamma: d_gamma(),
            gae_lambda: d_lambda(),
            clip_epsilon: d_clip(),
            learning_rate: d_lr(),
            minibatch_size: d_minibatch(),
            epochs: d_epochs(),
            max_grad_norm: d_grad_norm(),
            seed: 0,
            measure_every: d_measure(),
            eval_episodes: d_eval_episodes(),
            distance: DistanceKind::Wasserstein,
            wind: None,
            diversity: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be positive");
        }
        if self.iterations == 0
            || self.episodes_per_iteration == 0
            || self.minibatch_size == 0
            || self.epochs == 0
            || self.measure_every == 0
            || self.eval_episodes == 0
        {
            return bad("all counts must be positive");
        }
        if let Some(w) = &self.wind {
            w.validate()?;
        }
        if let Some(d) = &self.diversity {
            d.validate()?;
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean over training episodes of the agent-averaged return.
    pub reward_mean: f64,
    pub reward_std: f64,
    pub snd: Option<f64>,
    pub hse: Option<f64>,
    pub contributions: Option<Vec<f64>>,
    pub wind: f64,
    pub penalty: Option<f64>,
    /// Wall-clock seconds since training started. Excluded from equality.
    pub elapsed_s: f64,
}

impl PartialEq for IterationRecord {
    fn eq(&self, o: &Self) -> bool {
        self.iteration == o.iteration
            && self.reward_mean == o.reward_mean
            && self.reward_std == o.reward_std
            && self.snd == o.snd
            && self.hse == o.hse
            && self.contributions == o.contributions
            && self.wind == o.wind
            && self.penalty == o.penalty
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub records: Vec<IterationRecord>,
    /// Distance matrix of the most recent measurement.
    pub last_matrix: Option<DistanceMatrix>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl TrainingLog {
    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward_mean).collect()
    }

    /// `(iteration, snd)` for every measured iteration.
    pub fn snd_series(&self) -> Vec<(usize, f64)> {
        self.records.iter().filter_map(|r| r.snd.map(|s| (r.iteration, s))).collect()
    }

    /// Mean SND over measurements taken at iterations in `range`.
    pub fn mean_snd(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let v: Vec<f64> = self.snd_series().into_iter().filter(|(i, _)| range.contains(i)).map(|(_, s)| s).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean HSE over measurements taken at iterations in `range`.
    pub fn mean_hse(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| range.contains(&r.iteration))
            .filter_map(|r| r.hse)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// CSV with columns
    /// `iteration,reward_mean,reward_std,snd,hse,wind,penalty,c0..c{n-1}`.
    pub fn to_csv(&self) -> String {
        let n = self
            .records
            .iter()
            .find_map(|r| r.contributions.as_ref().map(Vec::len))
            .unwrap_or(0);
        let mut out = String::from("iteration,reward_mean,reward_std,snd,hse,wind,penalty");
        for i in 0..n {
            out.push_str(&format!(",c{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                r.iteration,
                r.reward_mean,
                r.reward_std,
                opt(r.snd),
                opt(r.hse),
                r.wind,
                opt(r.penalty)
            ));
            for i in 0..n {
                out.push(',');
                if let Some(c) = &r.contributions {
                    out.push_str(&format!("{}", c[i]));
                }
            }
            out.push('\n');
        }
        out
    }

    /// JSON array of records, without wall-clock times so that reruns are
    /// byte-identical.
    pub fn to_json(&self) -> String {
        let stripped: Vec<IterationRecord> = self
            .records
            .iter()
            .map(|r| IterationRecord { elapsed_s: 0.0, ..r.clone() })
            .collect();
        serde_json::to_string_pretty(&stripped).expect("log serializes")
    }

    /// Reads [`to_json`](Self::to_json) output. The final matrix is not part
    /// of the JSON and comes back empty.
    pub fn from_json(text: &str) -> Result<Self> {
        let records = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Self { records, last_matrix: None })
    }
}

/// Generalized advantage estimates and return targets for one trajectory
/// that terminates after its last step.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let t_max = rewards.len();
    let mut adv = vec![0.0; t_max];
    let mut running = 0.0;
    for t in (0..t_max).rev() {
        let next_value = if t + 1 < t_max { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Coefficient `c` with `∇(−surrogate) = −c ∇ log π` for one sample of the
/// clipped objective `min(ρA, clip(ρ, 1−ε, 1+ε)A)`. The clipped branch has no
/// gradient.
pub fn clipped_surrogate_coefficient(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = (advantage > 0.0 && ratio > 1.0 + epsilon) || (advantage < 0.0 && ratio < 1.0 - epsilon);
    if clipped {
        0.0
    } else {
        ratio * advantage
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Sample {
    step: usize,
    agent: usize,
    log_prob_old: f64,
    advantage: f64,
    target: f64,
}

struct Learner {
    critic: Mlp,
    critics: Vec<Vec<f64>>,
    actor_opt: Vec<Adam>,
    critic_opt: Vec<Adam>,
}

impl Learner {
    fn new(policies: &PolicySet, config: &TrainerConfig) -> Self {
        let shape = policies.shape();
        let mut sizes = vec![shape.obs_dim];
        sizes.extend(&shape.hidden);
        sizes.push(1);
        let critic = Mlp::new(sizes);
        let critics: Vec<Vec<f64>> = (0..policies.n_blocks())
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, b as u64, 0xC717));
                critic.init(&mut rng, 1.0)
            })
            .collect();
        let actor_opt = (0..policies.n_blocks()).map(|_| Adam::new(shape.block_len(), config.learning_rate)).collect();
        let critic_opt = (0..policies.n_blocks()).map(|_| Adam::new(critic.n_params(), config.learning_rate)).collect();
        Self { critic, critics, actor_opt, critic_opt }
    }
}

/// Measurement of the current policies on a fresh batch.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub matrix: DistanceMatrix,
    pub snd: f64,
    pub hse: f64,
    pub contributions: Vec<f64>,
}

/// Collects `episodes` fresh episodes with `seed` and summarizes diversity.
pub fn measure<E: Environment + ?Sized>(env: &mut E, policies: &PolicySet, episodes: usize, seed: u64, kind: DistanceKind) -> Result<Measurement> {
    let batch = collect_batch(env, policies, episodes, seed)?;
    let matrix = distance_matrix(policies, &batch, kind)?;
    Ok(Measurement {
        snd: snd(&matrix)?,
        hse: hse(&matrix)?,
        contributions: agent_contributions(&matrix)?,
        matrix,
    })
}

fn check_compatible<E: Environment + ?Sized>(env: &E, policies: &PolicySet) -> Result<()> {
    use crate::policies::Behavior;
    if env.n_agents() != policies.n_agents() {
        return Err(Error::AgentCountMismatch { env: env.n_agents(), policies: policies.n_agents() });
    }
    if env.obs_dim() != policies.shape().obs_dim {
        return Err(Error::DimensionMismatch { expected: env.obs_dim(), got: policies.shape().obs_dim });
    }
    if env.action_dim() != policies.shape().action_dim {
        return Err(Error::DimensionMismatch { expected: env.action_dim(), got: policies.shape().action_dim });
    }
    Ok(())
}

/// Trains `policies` in place. `make_env` is called twice: once for the
/// training environment and once for the evaluation environment.
pub fn train<E, F>(mut make_env: F, policies: &mut PolicySet, config: &TrainerConfig) -> Result<TrainingLog>
where
    E: Environment,
    F: FnMut() -> Result<E>,
{
    config.validate()?;
    let mut env = make_env()?;
    let mut eval_env = make_env()?;
    check_compatible(&env, policies)?;
    if config.diversity.is_some() && policies.blocks().len() < 2 && env.n_agents() < 2 {
        return Err(Error::TooFewAgents(env.n_agents()));
    }

    let mut learner = Learner::new(policies, config);
    let mut log = TrainingLog::default();
    let start = Instant::now();

    for it in 0..config.iterations {
        let wind = config.wind.as_ref().map_or(0.0, |w| w.magnitude_at(it));
        env.set_wind(wind);
        eval_env.set_wind(wind);

        let batch = rollout(&mut env, policies, RolloutOptions::new(config.episodes_per_iteration, mix(config.seed, it as u64, 1)))?;
        let returns = batch.episode_returns();
        let reward_mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let reward_std = if returns.len() > 1 {
            (returns.iter().map(|r| (r - reward_mean).powi(2)).sum::<f64>() / (returns.len() - 1) as f64).sqrt()
        } else {
            0.0
        };

        let penalty = update(policies, &mut learner, &batch, config, it)?;

        if let Some((b, _)) = policies.blocks().iter().enumerate().find(|(_, b)| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { iteration: it, reason: format!("non-finite parameter in block {b}") });
        }

        let measure_now = it % config.measure_every == 0 || it + 1 == config.iterations;
        let (snd_v, hse_v, contrib) = if measure_now {
            let m = measure(&mut eval_env, policies, config.eval_episodes, mix(config.seed, it as u64, 2), config.distance)?;
            let out = (Some(m.snd), Some(m.hse), Some(m.contributions));
            log.last_matrix = Some(m.matrix);
            out
        } else {
            (None, None, None)
        };
        log.records.push(IterationRecord {
            iteration: it,
            reward_mean,
            reward_std,
            snd: snd_v,
            hse: hse_v,
            contributions: contrib,
            wind,
            penalty,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

/// Runs the optimization epochs for one batch; returns the last penalty value
/// when a diversity target is set.
fn update(policies: &mut PolicySet, learner: &mut Learner, batch: &RolloutBatch, config: &TrainerConfig, it: usize) -> Result<Option<f64>> {
    let n = batch.n_agents();
    let steps = batch.steps();
    let n_blocks = policies.n_blocks();
    let block_len = policies.shape().block_len();
    let critic_len = learner.critic.n_params();

    // old log-probs, values, advantages
    let mut scratch = policies.scratch();
    let mut cws = learner.critic.workspace();
    let mut samples = Vec::with_capacity(steps.len() * n);
    for range in batch.episode_ranges() {
        for agent in 0..n {
            let b = policies.block_index(agent);
            let mut rewards = Vec::with_capacity(range.len());
            let mut values = Vec::with_capacity(range.len());
            let mut lps = Vec::with_capacity(range.len());
            for t in range.clone() {
                let s = &steps[t];
                let dist = policies.evaluate_with(agent, &s.observations[agent], &mut scratch)?;
                lps.push(dist.log_prob(&s.actions[agent])?);
                values.push(learner.critic.forward(&learner.critics[b], &s.observations[agent], &mut cws)[0]);
                rewards.push(s.rewards[agent]);
            }
            let (adv, targets) = gae(&rewards, &values, config.gamma, config.gae_lambda);
            for (k, t) in range.clone().enumerate() {
                samples.push(Sample { step: t, agent, log_prob_old: lps[k], advantage: adv[k], target: targets[k] });
            }
        }
    }
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / samples.len() as f64;
    let sd = var.sqrt().max(1e-8);
    for s in &mut samples {
        s.advantage = (s.advantage - mean) / sd;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, it as u64, 3));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut actor_grads = vec![vec![0.0; block_len]; n_blocks];
    let mut critic_grads = vec![vec![0.0; critic_len]; n_blocks];
    let eps = config.clip_epsilon;
    let mut last_penalty = None;
    let penalty_weight = config.diversity.map(|d| d.weight_at(it, config.iterations));

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.minibatch_size) {
            let mut counts = vec![0usize; n_blocks];
            for &k in chunk {
                counts[policies.block_index(samples[k].agent)] += 1;
            }
            actor_grads.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x = 0.0));
            critic_grads.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x = 0.0));
            for &k in chunk {
                let s = &samples[k];
                let b = policies.block_index(s.agent);
                let scale = 1.0 / counts[b] as f64;
                let obs = &steps[s.step].observations[s.agent];
                let action = &steps[s.step].actions[s.agent];
                policies.backprop_into(
                    s.agent,
                    obs,
                    &mut scratch,
                    |dist| {
                        let lp = dist.log_prob(action).unwrap_or(f64::NEG_INFINITY);
                        let ratio = (lp - s.log_prob_old).exp();
                        // minimizing −surrogate
                        let c = -clipped_surrogate_coefficient(ratio, s.advantage, eps) * scale;
                        let mut dm = Vec::with_capacity(dist.dim());
                        let mut ds = Vec::with_capacity(dist.dim());
                        for ((&m, &sd), &x) in dist.means().iter().zip(dist.stddevs()).zip(action) {
                            let z = (x - m) / sd;
                            dm.push(c * z / sd);
                            ds.push(c * (z * z - 1.0) / sd);
                        }
                        (dm, ds)
                    },
                    &mut actor_grads[b],
                )?;
                let v = learner.critic.forward(&learner.critics[b], obs, &mut cws)[0];
                let dv = (v - s.target) * scale;
                learner.critic.backward(&learner.critics[b], &mut cws, &[dv], &mut critic_grads[b]);
            }

            if let (Some(target), Some(w)) = (config.diversity.as_ref(), penalty_weight) {
                let picks: Vec<usize> = (0..target.samples).map(|_| rand::Rng::random_range(&mut rng, 0..steps.len())).collect();
                let obs: Vec<&[f64]> = picks
                    .iter()
                    .flat_map(|&t| steps[t].observations.iter().map(|o| o.as_slice()))
                    .collect();
                let pg = penalty_gradient(policies, &obs, target)?;
                last_penalty = Some(pg.penalty);
                for (g, pgb) in actor_grads.iter_mut().zip(&pg.grads) {
                    for (a, p) in g.iter_mut().zip(pgb) {
                        *a += w * p;
                    }
                }
            }

            for b in 0..n_blocks {
                if counts[b] == 0 && config.diversity.is_none() {
                    continue;
                }
                if actor_grads[b].iter().chain(&critic_grads[b]).any(|g| !g.is_finite()) {
                    return Err(Error::Diverged { iteration: it, reason: format!("non-finite gradient in block {b}") });
                }
                clip_norm(&mut actor_grads[b], config.max_grad_norm);
                clip_norm(&mut critic_grads[b], config.max_grad_norm);
                learner.actor_opt[b].step(&mut policies.blocks_mut()[b], &actor_grads[b]);
                if counts[b] > 0 {
                    learner.critic_opt[b].step(&mut learner.critics[b], &critic_grads[b]);
                }
            }
        }
    }
    Ok(last_penalty)
}

/// Homogeneous and heterogeneous runs of the same dynamic-wind schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ResilienceRun {
    pub homogeneous: TrainingLog,
    pub heterogeneous: TrainingLog,
}

/// Setup for the flocking-in-wind comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResilienceConfig {
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub flocking: FlockingConfig,
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
}

/// Trains homogeneous and heterogeneous teams on flocking under the
/// trainer's wind schedule, which must alternate off/on/off/on.
pub fn wind_resilience_experiment(config: &ResilienceConfig) -> Result<ResilienceRun> {
    let schedule = config
        .trainer
        .wind
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("resilience experiment needs a wind schedule".into()))?;
    let phases = wind_phases(schedule, config.trainer.iterations);
    let pattern: Vec<bool> = phases.iter().map(|p| p.windy).collect();
    if pattern != [false, true, false, true] {
        return Err(Error::InvalidConfig(format!("expected off/on/off/on wind phases, got {pattern:?}")));
    }
    let mut shape = NetworkShape::new(6, 2);
    if let Some(h) = &config.hidden {
        shape.hidden = h.clone();
    }
    let run = |mode| -> Result<TrainingLog> {
        let mut policies = PolicySet::new(mode, shape.clone(), 2, config.trainer.seed)?;
        train(|| FlockingWind::new(config.flocking.clone()), &mut policies, &config.trainer)
    };
    Ok(ResilienceRun {
        homogeneous: run(PolicyMode::Homogeneous)?,
        heterogeneous: run(PolicyMode::Heterogeneous)?,
    })
}

/// Maximal run of iterations with the same wind state.
#[derive(Debug, Clone, PartialEq)]
pub struct WindPhaseSpan {
    pub range: std::ops::Range<usize>,
    pub windy: bool,
}

/// Splits `0..iterations` into maximal spans of constant wind on/off state.
pub fn wind_phases(schedule: &WindSchedule, iterations: usize) -> Vec<WindPhaseSpan> {
    let mut out: Vec<WindPhaseSpan> = Vec::new();
    for it in 0..iterations {
        let windy = schedule.magnitude_at(it) > 0.0;
        match out.last_mut() {
            Some(p) if p.windy == windy => p.range.end = it + 1,
            _ => out.push(WindPhaseSpan { range: it..it + 1, windy }),
        }
    }
    out
}

/// Iterations after the start of `range` until `rewards` first reaches 90% of
/// the way from its value at the phase start to its peak within the phase.
pub fn iterations_to_recover(rewards: &[f64], range: std::ops::Range<usize>) -> usize {
    let phase = &rewards[range];
    let base = phase[0];
    let peak = phase.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = base + 0.9 * (peak - base);
    phase.iter().position(|&r| r >= threshold).unwrap_or(0)
}
