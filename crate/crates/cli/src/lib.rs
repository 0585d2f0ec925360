//! The `snd` command line: training runs, metric evaluation, noise sweeps and
//! seed aggregation.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use snd_core::analysis::{aggregate_seeds, noise_robustness_sweep, parse_delta_spec, sweep_to_csv, SampleSummary};
use snd_core::distance::{agent_contributions, collect_batch, distance_matrix};
use snd_core::metrics::{hse, snd};
use snd_core::policies::{Behavior, PolicySet};
use snd_core::training::{train, TrainerConfig, TrainingLog};
use snd_core::DistanceMatrix;

use config::{ExperimentConfig, TaskConfig, Variant};
use output::{load_checkpoint, load_log, load_matrix, write, write_csv, write_json, Provenance};

/// Default output root when neither `--out` nor the config names one.
pub const OUTPUT_ROOT_VAR: &str = "SND_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "snd", version, about = "Behavioral diversity experiments and metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every seed (and sweep variant) of an experiment config.
    Train(TrainArgs),
    /// Print SND, HSE and agent contributions as JSON.
    Metrics(MetricsArgs),
    /// Evaluate frozen policies under uniform observation noise.
    SweepNoise(SweepNoiseArgs),
    /// Per-iteration mean/std across seed logs.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; the run is written to `<root>/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Number of runs trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Distance matrix as CSV or JSON.
    #[arg(long, conflicts_with = "checkpoint")]
    pub matrix: Option<PathBuf>,
    /// Policy checkpoint; needs `--config` for the environment.
    #[arg(long, requires = "config")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepNoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Second checkpoint to compare against with Welch's t-test.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub config: PathBuf,
    /// Noise grid `lo:hi:count`.
    #[arg(long, default_value = "0:2:10")]
    pub deltas: String,
    #[arg(long, default_value_t = 50)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// `log.json` files, or run directories containing `seed-*/log.json`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a).map(|dir| eprintln!("wrote {}", dir.display())),
        Command::Metrics(a) => {
            println!("{}", serde_json::to_string_pretty(&cmd_metrics(&a)?)?);
            Ok(())
        }
        Command::SweepNoise(a) => emit(a.out.as_deref(), &cmd_sweep_noise(&a)?),
        Command::Aggregate(a) => emit(a.out.as_deref(), &cmd_aggregate(&a)?),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn output_root(cli: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Final measured values of one run.
#[derive(Debug, Clone, Serialize)]
pub struct FinalValues {
    pub iteration: usize,
    pub reward_mean: f64,
    pub snd: f64,
    pub hse: f64,
    pub contributions: Vec<f64>,
}

fn final_values(log: &TrainingLog) -> Result<FinalValues> {
    let last_reward = log.records.last().context("empty training log")?;
    let measured = log.records.iter().rev().find(|r| r.snd.is_some()).context("no measurement in log")?;
    Ok(FinalValues {
        iteration: last_reward.iteration,
        reward_mean: last_reward.reward_mean,
        snd: measured.snd.unwrap_or_default(),
        hse: measured.hse.unwrap_or_default(),
        contributions: measured.contributions.clone().unwrap_or_default(),
    })
}

/// Runs `f` over `items` on up to `workers` threads, keeping input order.
fn run_parallel<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result slots poisoned").into_iter().map(|r| r.expect("every job ran")).collect()
}

fn train_one(config: &ExperimentConfig, variant: &Variant, seed: u64, dir: &Path) -> Result<TrainingLog> {
    let env = variant.task.build()?;
    let shape = config.policy.shape(env.obs_dim(), env.action_dim())?;
    let mut policies = PolicySet::new(config.policy.mode, shape, env.n_agents(), seed)?;
    let trainer = TrainerConfig { seed, ..config.trainer.clone() };
    let log = train(|| variant.task.build(), &mut policies, &trainer)
        .with_context(|| format!("training {} seed {seed}", if variant.label.is_empty() { &config.name } else { &variant.label }))?;

    let prov = Provenance::new(config, Some(&variant.label), vec![seed]);
    write_csv(&dir.join("log.csv"), &prov, &log.to_csv())?;
    let records: serde_json::Value = serde_json::from_str(&log.to_json())?;
    write_json(&dir.join("log.json"), &prov, "records", records)?;
    if let Some(m) = &log.last_matrix {
        write_csv(&dir.join("matrix.csv"), &prov, &m.to_csv())?;
        write_json(&dir.join("matrix.json"), &prov, "matrix", serde_json::from_str(&m.to_json())?)?;
    }
    write_json(&dir.join("checkpoint.json"), &prov, "checkpoint", serde_json::to_value(policies.to_checkpoint())?)?;
    write_json(&dir.join("summary.json"), &prov, "final", serde_json::to_value(final_values(&log)?)?)?;
    Ok(log)
}

/// Trains every variant and seed; returns the run directory.
pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds.clone();
        config.validate().context("invalid --seeds")?;
    }
    ensure!(args.parallel > 0, "--parallel must be at least 1");
    let run_dir = output_root(args.out.as_deref(), &config).join(&config.name);
    let variants = config.variants()?;
    let jobs: Vec<(usize, u64)> = (0..variants.len()).flat_map(|v| config.seeds.iter().map(move |&s| (v, s))).collect();
    let dir_of = |v: usize| if variants[v].label.is_empty() { run_dir.clone() } else { run_dir.join(&variants[v].label) };

    let results = run_parallel(&jobs, args.parallel, |&(v, seed)| {
        train_one(&config, &variants[v], seed, &dir_of(v).join(format!("seed-{seed}")))
    });
    let mut logs: Vec<Vec<TrainingLog>> = vec![Vec::new(); variants.len()];
    for ((v, _), r) in jobs.iter().zip(results) {
        logs[*v].push(r?);
    }

    let mut table = String::from("n,snd_mean,snd_std,hse_mean,hse_std,reward_mean,reward_std\n");
    for (v, variant) in variants.iter().enumerate() {
        let prov = Provenance::new(&config, Some(&variant.label), config.seeds.clone());
        write_csv(&dir_of(v).join("aggregate.csv"), &prov, &aggregate_seeds(&logs[v])?.to_csv())?;
        let finals = logs[v].iter().map(final_values).collect::<Result<Vec<_>>>()?;
        let stat = |f: fn(&FinalValues) -> f64| SampleSummary::from_values(finals.iter().map(f).collect());
        let (s, h, r) = (stat(|f| f.snd)?, stat(|f| f.hse)?, stat(|f| f.reward_mean)?);
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            variant.task.n_agents(),
            s.mean,
            s.std,
            h.mean,
            h.std,
            r.mean,
            r.std
        ));
    }
    if config.sweep.is_some() {
        let prov = Provenance::new(&config, None, config.seeds.clone());
        write_csv(&run_dir.join("table.csv"), &prov, &table)?;
    }
    Ok(run_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    /// Joint observations behind the matrix, when known.
    pub batch_size: Option<usize>,
    pub snd: f64,
    pub hse: f64,
    pub contributions: Vec<f64>,
}

fn report(m: &DistanceMatrix) -> Result<MetricsReport> {
    Ok(MetricsReport {
        n: m.n(),
        batch_size: (m.meta().batch_size > 0).then_some(m.meta().batch_size),
        snd: snd(m)?,
        hse: hse(m)?,
        contributions: agent_contributions(m)?,
    })
}

fn load_policies(path: &Path, task: &TaskConfig) -> Result<PolicySet> {
    let policies = PolicySet::from_checkpoint(load_checkpoint(path)?)?;
    let env = task.build()?;
    ensure!(
        policies.n_agents() == env.n_agents()
            && policies.shape().obs_dim == env.obs_dim()
            && policies.action_dim() == env.action_dim(),
        "checkpoint {} ({} agents, obs {}, action {}) does not fit the task ({} agents, obs {}, action {})",
        path.display(),
        policies.n_agents(),
        policies.shape().obs_dim,
        policies.action_dim(),
        env.n_agents(),
        env.obs_dim(),
        env.action_dim()
    );
    Ok(policies)
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<MetricsReport> {
    match (&args.matrix, &args.checkpoint, &args.config) {
        (Some(path), None, _) => report(&load_matrix(path)?),
        (None, Some(ck), Some(cfg)) => {
            let config = ExperimentConfig::load(cfg)?;
            let policies = load_policies(ck, &config.task)?;
            let mut env = config.task.build()?;
            let batch = collect_batch(&mut env, &policies, args.episodes, args.seed)?;
            report(&distance_matrix(&policies, &batch, config.trainer.distance)?)
        }
        _ => bail!("give either --matrix, or --checkpoint with --config"),
    }
}

pub fn cmd_sweep_noise(args: &SweepNoiseArgs) -> Result<String> {
    let config = ExperimentConfig::load(&args.config)?;
    let deltas = parse_delta_spec(&args.deltas)?;
    let policies = load_policies(&args.checkpoint, &config.task)?;
    let baseline = args.baseline.as_deref().map(|b| load_policies(b, &config.task)).transpose()?;
    let rows = noise_robustness_sweep(|| config.task.build(), &policies, baseline.as_ref(), &deltas, args.episodes, args.seed)?;
    let inputs = json!({
        "experiment": config,
        "checkpoint": args.checkpoint,
        "baseline": args.baseline,
        "deltas": args.deltas,
        "episodes": args.episodes,
    });
    Ok(format!("{}{}", Provenance::new(&inputs, None, vec![args.seed]).csv_header(), sweep_to_csv(&rows)))
}

fn find_logs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("seed-"))
        .map(|e| e.path().join("log.json"))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    ensure!(!found.is_empty(), "no seed-*/log.json under {}", input.display());
    Ok(found)
}

pub fn cmd_aggregate(args: &AggregateArgs) -> Result<String> {
    let mut paths = Vec::new();
    for input in &args.inputs {
        paths.extend(find_logs(input)?);
    }
    let logs = paths.iter().map(|p| load_log(p)).collect::<Result<Vec<_>>>()?;
    let curves = aggregate_seeds(&logs)?;
    let prov = Provenance::new(&json!({ "logs": paths }), None, Vec::new());
    Ok(format!("{}{}", prov.csv_header(), curves.to_csv()))
}
