//! Seed aggregation, observation-noise robustness sweeps, and Welch's
//! unequal-variances t-test.

use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::policies::Behavior;
use crate::rollout::{rollout, RolloutOptions};
use crate::training::TrainingLog;

/// A sample with its mean and (n−1) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Zero for a single value.
    pub std: f64,
    pub count: usize,
}

impl SampleSummary {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSample("empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite value".into()));
        }
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { values, mean, std, count })
    }

    /// A summary known only through its moments.
    pub fn from_moments(mean: f64, std: f64, count: usize) -> Result<Self> {
        if count == 0 || !mean.is_finite() || !(std >= 0.0) || !std.is_finite() {
            return Err(Error::InvalidSample(format!("bad moments mean={mean} std={std} count={count}")));
        }
        Ok(Self { values: Vec::new(), mean, std, count })
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Welch's t-test for a difference in means (`a − b`).
///
/// When both samples have zero variance the statistic is 0 with p = 1 for
/// equal means and ±∞ with p = 0 otherwise; df is then `n_a + n_b − 2`.
pub fn welch_t_test(a: &SampleSummary, b: &SampleSummary) -> Result<WelchTest> {
    for s in [a, b] {
        if s.count < 2 {
            return Err(Error::InvalidSample(format!("t-test needs at least 2 values per sample, got {}", s.count)));
        }
        if !s.std.is_finite() {
            return Err(Error::InvalidSample("non-finite variance".into()));
        }
    }
    let (na, nb) = (a.count as f64, b.count as f64);
    let (va, vb) = (a.variance() / na, b.variance() / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if a.mean == b.mean {
            WelchTest { t: 0.0, df, p: 1.0 }
        } else {
            WelchTest { t: (a.mean - b.mean).signum() * f64::INFINITY, df, p: 0.0 }
        });
    }
    let t = (a.mean - b.mean) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchTest { t, df, p: student_t_two_sided(t, df) })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() || !(df > 0.0) {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Cumulative distribution of Student's t.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Natural log of Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)`, evaluated with a modified-Lentz continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) || !(a > 0.0) || !(b > 0.0) {
        return f64::NAN;
    }
    if x == 0.0 || x == 1.0 {
        return x;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // the fraction converges fast for x below the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        for num in [
            m * (b - m) * x / ((a + m2 - 1.0) * (a + m2)),
            -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0)),
        ] {
            d = 1.0 + num * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + num / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
            if num != 0.0 && (d * c - 1.0).abs() < EPS && m > 1.0 {
                return h;
            }
        }
        if (d * c - 1.0).abs() < EPS {
            return h;
        }
    }
    h
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn delta_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo >= 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::InvalidConfig(format!("noise range {lo}..{hi} must satisfy 0 <= lo <= hi")));
    }
    match count {
        0 => Err(Error::InvalidConfig("noise grid needs at least one value".into())),
        1 => Ok(vec![lo]),
        _ => Ok((0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()),
    }
}

/// Parses `lo:hi:count`, e.g. `0:2:10`.
pub fn parse_delta_spec(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let bad = || Error::Parse(format!("noise spec {spec:?} is not lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    delta_grid(lo, hi, count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub rewards: SampleSummary,
    /// Welch p-value against the baseline policies at the same δ.
    pub p_value: Option<f64>,
}

/// Episode returns of frozen `policies` under uniform observation noise of
/// each half-width in `deltas`. Every δ reuses `seed`, so δ = 0 reproduces a
/// clean evaluation and the two policy sets face identical episodes. δ values
/// are evaluated on parallel threads.
pub fn noise_robustness_sweep<E, F, B>(
    make_env: F,
    policies: &B,
    baseline: Option<&B>,
    deltas: &[f64],
    episodes: usize,
    seed: u64,
) -> Result<Vec<SweepRow>>
where
    E: Environment,
    F: Fn() -> Result<E> + Sync,
    B: Behavior + Sync + ?Sized,
{
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise half-width {d} must be >= 0")));
    }
    if episodes == 0 {
        return Err(Error::InvalidConfig("need at least one episode per noise level".into()));
    }
    let returns = |b: &B, delta: f64| -> Result<SampleSummary> {
        let mut env = make_env()?;
        let opts = RolloutOptions { obs_noise: delta, ..RolloutOptions::new(episodes, seed) };
        SampleSummary::from_values(rollout(&mut env, b, opts)?.episode_returns())
    };
    let row = |delta: f64| -> Result<SweepRow> {
        let rewards = returns(policies, delta)?;
        let p_value = match baseline {
            Some(base) => {
                let other = returns(base, delta)?;
                Some(welch_t_test(&rewards, &other)?.p)
            }
            None => None,
        };
        Ok(SweepRow { delta, rewards, p_value })
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = deltas.iter().map(|&d| s.spawn(move || row(d))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}

/// CSV `delta,mean,std[,p_value_vs_baseline]`; the p-value column appears
/// only when every row has one.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let with_p = !rows.is_empty() && rows.iter().all(|r| r.p_value.is_some());
    let mut out = String::from(if with_p { "delta,mean,std,p_value_vs_baseline\n" } else { "delta,mean,std\n" });
    for r in rows {
        out.push_str(&format!("{},{},{}", r.delta, r.rewards.mean, r.rewards.std));
        if with_p {
            out.push_str(&format!(",{}", r.p_value.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 when only one seed contributed.
    pub std: f64,
}

/// Per-iteration mean and std across seeds of every logged quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurves {
    /// Quantity names, in [`TrainingLog::to_csv`] column order.
    pub columns: Vec<String>,
    pub iterations: Vec<usize>,
    /// `values[row][column]`; `None` where the quantity was not measured.
    pub values: Vec<Vec<Option<Stat>>>,
    pub seeds: usize,
}

impl AggregateCurves {
    /// True when built from a single log, so every std is 0 by convention.
    pub fn single_seed(&self) -> bool {
        self.seeds == 1
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<Stat>>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|r| r[c]).collect())
    }

    /// CSV mirroring the log columns with `_mean`/`_std` suffixes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration");
        for c in &self.columns {
            out.push_str(&format!(",{c}_mean,{c}_std"));
        }
        out.push('\n');
        for (it, row) in self.iterations.iter().zip(&self.values) {
            out.push_str(&it.to_string());
            for v in row {
                match v {
                    Some(s) => out.push_str(&format!(",{},{}", s.mean, s.std)),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn record_columns(log: &TrainingLog, n_contrib: usize) -> Vec<Vec<Option<f64>>> {
    log.records
        .iter()
        .map(|r| {
            let mut v = vec![Some(r.reward_mean), Some(r.reward_std), r.snd, r.hse, Some(r.wind), r.penalty];
            for i in 0..n_contrib {
                v.push(r.contributions.as_ref().map(|c| c[i]));
            }
            v
        })
        .collect()
}

/// Pointwise statistics across logs with identical iteration grids and
/// measurement cadences.
pub fn aggregate_seeds(logs: &[TrainingLog]) -> Result<AggregateCurves> {
    let first = logs.first().ok_or_else(|| Error::InvalidSample("no logs to aggregate".into()))?;
    let iterations: Vec<usize> = first.records.iter().map(|r| r.iteration).collect();
    let n_contrib = first
        .records
        .iter()
        .find_map(|r| r.contributions.as_ref().map(Vec::len))
        .unwrap_or(0);
    let mut columns: Vec<String> = ["reward_mean", "reward_std", "snd", "hse", "wind", "penalty"].map(String::from).to_vec();
    columns.extend((0..n_contrib).map(|i| format!("c{i}")));

    let tables: Vec<Vec<Vec<Option<f64>>>> = logs
        .iter()
        .map(|l| {
            let its: Vec<usize> = l.records.iter().map(|r| r.iteration).collect();
            if its != iterations {
                return Err(Error::InvalidSample(format!(
                    "logs are not aligned: {} vs {} iterations",
                    iterations.len(),
                    its.len()
                )));
            }
            if l.records.iter().any(|r| r.contributions.as_ref().is_some_and(|c| c.len() != n_contrib)) {
                return Err(Error::InvalidSample("logs disagree on agent count".into()));
            }
            Ok(record_columns(l, n_contrib))
        })
        .collect::<Result<_>>()?;

    let k = logs.len();
    let mut values = Vec::with_capacity(iterations.len());
    for row in 0..iterations.len() {
        let mut out = Vec::with_capacity(columns.len());
        for col in 0..columns.len() {
            let xs: Vec<Option<f64>> = tables.iter().map(|t| t[row][col]).collect();
            let stat = match xs.iter().filter(|x| x.is_some()).count() {
                0 => None,
                c if c == k => {
                    let xs: Vec<f64> = xs.into_iter().flatten().collect();
                    let s = SampleSummary::from_values(xs).map_err(|e| Error::InvalidSample(format!("{} at iteration {}: {e}", columns[col], iterations[row])))?;
                    Some(Stat { mean: s.mean, std: s.std })
                }
                _ => {
                    return Err(Error::InvalidSample(format!(
                        "{} measured in only some logs at iteration {}",
                        columns[col], iterations[row]
                    )))
                }
            };
            out.push(stat);
        }
        values.push(out);
    }
    Ok(AggregateCurves { columns, iterations, values, seeds: k })
}

/// Pointwise median across equally long series.
pub fn median_curve(series: &[Vec<f64>]) -> Result<Vec<f64>> {
    let len = series.first().map(Vec::len).ok_or_else(|| Error::InvalidSample("no series".into()))?;
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidSample("series lengths differ".into()));
    }
    Ok((0..len)
        .map(|i| {
            let mut col: Vec<f64> = series.iter().map(|s| s[i]).collect();
            median(&mut col)
        })
        .collect())
}

/// Median of a non-empty slice (reorders it).
pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}
