//! Behavioral distance between agents and the pairwise distance matrix.
//!
//! `d(i, j)` averages the closed-form distance between agent `i`'s and agent
//! `j`'s action distributions over every agent's observation at every step of
//! a rollout batch. Evaluating on all agents' observations (not only those of
//! `i` and `j`) keeps the support identical for every pair.

use serde::{Deserialize, Serialize};

use crate::distributions::{DiagonalGaussian, DistanceKind};
use crate::error::{Error, Result};
use crate::policies::Behavior;
use crate::scalar::{from_usize, Exact, Real};

pub use crate::rollout::{collect_batch, RolloutBatch, StepRecord};

/// Provenance carried alongside a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub kind: DistanceKind,
    /// Number of joint observations `|B|` the distances were averaged over.
    pub batch_size: usize,
    pub episodes: usize,
    pub seed: Option<u64>,
}

/// Square, non-negative, hollow, exactly symmetric matrix of `d(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BehavioralDistanceMatrix<T> {
    n: usize,
    values: Vec<T>,
    meta: MatrixMeta,
}

impl<T: Exact> BehavioralDistanceMatrix<T> {
    /// Validates and wraps a full matrix given as rows.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::MalformedMatrix("no rows".into()));
        }
        let mut values = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::MalformedMatrix(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            values.extend(row);
        }
        let m = Self {
            n,
            values,
            meta: MatrixMeta::default(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds from a function evaluated once per unordered pair `i < j`,
    /// mirrored into the lower triangle.
    pub fn from_pairs(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        if n == 0 {
            return Err(Error::MalformedMatrix("no agents".into()));
        }
        let mut values = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        let m = Self {
            n,
            values,
            meta: MatrixMeta::default(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Every off-diagonal entry equal to `x`.
    pub fn equidistant(n: usize, x: T) -> Result<Self> {
        Self::from_pairs(n, |_, _| x)
    }

    /// `n` agents split evenly into `clusters` groups (agent `i` belongs to
    /// group `i / (n / clusters)`); zero within a group and `x` across groups.
    pub fn clustered(n: usize, clusters: usize, x: T) -> Result<Self> {
        if clusters == 0 || n % clusters != 0 {
            return Err(Error::ClustersDoNotDivide {
                agents: n,
                clusters,
            });
        }
        let size = n / clusters;
        Self::from_pairs(n, |i, j| if i / size == j / size { T::zero() } else { x })
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.values[i * n + i] != T::zero() {
                return Err(Error::MalformedMatrix(format!("diagonal entry {i} is non-zero")));
            }
            for j in 0..n {
                let v = self.values[i * n + j];
                // Written so NaN fails too.
                if !(v >= T::zero()) {
                    return Err(Error::MalformedMatrix(format!(
                        "entry ({i},{j}) = {v:?} is not non-negative"
                    )));
                }
                if v != self.values[j * n + i] {
                    return Err(Error::MalformedMatrix(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    pub fn with_meta(mut self, meta: MatrixMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn meta(&self) -> &MatrixMeta {
        &self.meta
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Unordered pairs `(i, j, d)` with `i < j`.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, self.get(i, j))))
    }

    /// Largest entry.
    pub fn max_entry(&self) -> T {
        self.values
            .iter()
            .copied()
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    /// Multiplies every entry by a non-negative constant.
    pub fn scaled(&self, c: T) -> Result<Self> {
        if c < T::zero() {
            return Err(Error::MalformedMatrix("negative scale".into()));
        }
        Ok(Self {
            n: self.n,
            values: self.values.iter().map(|&v| v * c).collect(),
            meta: self.meta,
        })
    }

    /// Relabels agents: entry `(i, j)` of the result is `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::MalformedMatrix("not a permutation".into()));
        }
        let mut values = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        Ok(Self {
            n,
            values,
            meta: self.meta,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    kind: DistanceKind,
    seed: Option<u64>,
    episodes: usize,
    #[serde(default)]
    batch_size: usize,
    values: Vec<Vec<f64>>,
}

impl BehavioralDistanceMatrix<f64> {
    /// Headerless CSV, one row per agent.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output; blank lines and lines starting
    /// with `#` are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|line| {
                line.split(',')
                    .map(|cell| {
                        cell.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("{cell:?}: {e}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    pub fn to_json(&self) -> String {
        let j = MatrixJson {
            n: self.n,
            kind: self.meta.kind,
            seed: self.meta.seed,
            episodes: self.meta.episodes,
            batch_size: self.meta.batch_size,
            values: self.rows(),
        };
        serde_json::to_string_pretty(&j).expect("matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: MatrixJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if j.values.len() != j.n {
            return Err(Error::MalformedMatrix(format!(
                "declared n = {} but {} rows",
                j.n,
                j.values.len()
            )));
        }
        Ok(Self::from_rows(j.values)?.with_meta(MatrixMeta {
            kind: j.kind,
            batch_size: j.batch_size,
            episodes: j.episodes,
            seed: j.seed,
        }))
    }
}

fn check_agent(index: usize, n: usize) -> Result<()> {
    if index >= n {
        return Err(Error::AgentOutOfRange { index, n });
    }
    Ok(())
}

/// `d(i, j)`: mean distance between the two agents' action distributions over
/// every observation of every agent in the batch.
pub fn pairwise_distance<B: Behavior + ?Sized>(
    i: usize,
    j: usize,
    policies: &B,
    batch: &RolloutBatch,
    kind: DistanceKind,
) -> Result<f64> {
    let n = policies.n_agents();
    check_agent(i, n)?;
    check_agent(j, n)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if i == j {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for step in batch.steps() {
        for obs in &step.observations {
            let p = policies.evaluate(i, obs)?;
            let q = policies.evaluate(j, obs)?;
            total += kind.eval(&p, &q)?;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Full `n × n` matrix. Each policy is evaluated once per observation; each
/// unordered pair is computed once and mirrored.
pub fn distance_matrix<B: Behavior + ?Sized>(
    policies: &B,
    batch: &RolloutBatch,
    kind: DistanceKind,
) -> Result<BehavioralDistanceMatrix<f64>> {
    let n = policies.n_agents();
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.n_agents() != n {
        return Err(Error::AgentCountMismatch {
            env: batch.n_agents(),
            policies: n,
        });
    }
    // outputs[agent][sample]
    let mut outputs: Vec<Vec<DiagonalGaussian<f64>>> = vec![Vec::new(); n];
    for step in batch.steps() {
        for obs in &step.observations {
            for (agent, out) in outputs.iter_mut().enumerate() {
                out.push(policies.evaluate(agent, obs)?);
            }
        }
    }
    let samples = outputs[0].len() as f64;
    let mut sums = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let mut acc = 0.0;
            for (p, q) in outputs[i].iter().zip(&outputs[j]) {
                acc += kind.eval(p, q)?;
            }
            sums[i * n + j] = acc / samples;
        }
    }
    let m = BehavioralDistanceMatrix::from_pairs(n, |i, j| sums[i * n + j])?;
    Ok(m.with_meta(MatrixMeta {
        kind,
        batch_size: batch.len(),
        episodes: batch.episodes(),
        seed: Some(batch.seed()),
    }))
}

/// Fraction of total diversity attributable to each agent.
///
/// Raw contribution is the row sum divided by `n`; the result is normalized to
/// sum to one. An all-zero matrix yields the uniform vector.
pub fn agent_contributions<T: Real>(d: &BehavioralDistanceMatrix<T>) -> Result<Vec<T>> {
    let n = d.n();
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    let nn: T = from_usize(n);
    let raw: Vec<T> = (0..n)
        .map(|i| d.row(i).iter().fold(T::zero(), |a, &b| a + b) / nn)
        .collect();
    let total = raw.iter().fold(T::zero(), |a, &b| a + b);
    if total == T::zero() {
        return Ok(vec![T::one() / nn; n]);
    }
    Ok(raw.into_iter().map(|r| r / total).collect())
}
