//! Team-level diversity from a behavioral distance matrix.
//!
//! [`snd`] is the mean distance over unique agent pairs. [`hse`] integrates
//! the Shannon entropy of the agent partition obtained by linking every pair
//! whose distance is at most the threshold `l`, over all `l ≥ 0`.

use crate::distance::BehavioralDistanceMatrix;
use crate::error::{Error, Result};
use crate::scalar::{from_usize, Exact, Real};

/// System neural diversity: `2 Σ_{i<j} d(i, j) / (n (n − 1))`.
pub fn snd<T: Exact>(d: &BehavioralDistanceMatrix<T>) -> Result<T> {
    let n = d.n();
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    let sum = compensated_sum(d.upper_triangle().map(|(_, _, v)| v));
    let pairs: T = from_usize(n * (n - 1));
    Ok(from_usize::<T>(2) * sum / pairs)
}

/// Neumaier summation of non-negative terms. For exact scalars the
/// correction is identically zero.
fn compensated_sum<T: Exact>(values: impl Iterator<Item = T>) -> T {
    let (mut sum, mut correction) = (T::zero(), T::zero());
    for v in values {
        let t = sum + v;
        if sum >= v {
            correction = correction + ((sum - t) + v);
        } else {
            correction = correction + ((v - t) + sum);
        }
        sum = t;
    }
    sum + correction
}

/// SND of `n` agents spread evenly over `clusters` groups at mutual distance
/// `x`, zero within a group: `x · n (n_c − 1) / (n_c (n − 1))`.
pub fn snd_redundancy_formula<T: Exact>(x: T, n: usize, clusters: usize) -> Result<T> {
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if clusters == 0 || n % clusters != 0 {
        return Err(Error::ClustersDoNotDivide {
            agents: n,
            clusters,
        });
    }
    let num: T = from_usize(n * (clusters - 1));
    let den: T = from_usize(clusters * (n - 1));
    Ok(x * num / den)
}

/// Partition of agents into clusters. Clusters are sorted internally and
/// ordered by their smallest member.
pub type Partition = Vec<Vec<usize>>;

/// Piecewise-constant clustering of agents as a function of threshold `l`.
///
/// `initial` holds on `[0, heights[0])` (or everywhere if there are no
/// heights); `partitions[k]` holds on `[heights[k], heights[k + 1])`, the last
/// one up to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram<T> {
    initial: Partition,
    heights: Vec<T>,
    partitions: Vec<Partition>,
}

impl<T: Exact> Dendrogram<T> {
    pub fn initial(&self) -> &Partition {
        &self.initial
    }

    /// Distinct thresholds at which the partition changes, ascending.
    pub fn heights(&self) -> &[T] {
        &self.heights
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    /// Partition in effect at threshold `l ≥ 0`.
    pub fn partition_at(&self, l: T) -> &Partition {
        match self.heights.iter().rposition(|&h| h <= l) {
            Some(k) => &self.partitions[k],
            None => &self.initial,
        }
    }

    /// `(start, end, partition)` for every finite interval on which the
    /// partition is constant. The unbounded tail (one cluster) is omitted.
    pub fn intervals(&self) -> impl Iterator<Item = (T, T, &Partition)> + '_ {
        let starts = std::iter::once(T::zero()).chain(self.heights.iter().copied());
        let parts = std::iter::once(&self.initial).chain(self.partitions.iter());
        starts
            .zip(self.heights.iter().copied())
            .zip(parts)
            .map(|((s, e), p)| (s, e, p))
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // smaller root wins, keeps labels stable
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }

    fn partition(&mut self) -> Partition {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        by_root.into_iter().filter(|c| !c.is_empty()).collect()
    }
}

/// Connected components of the threshold graph `{(i, j) : d(i, j) ≤ l}` for
/// every `l`, i.e. single-linkage agglomeration. Tied edges merge together.
pub fn build_dendrogram<T: Exact>(d: &BehavioralDistanceMatrix<T>) -> Dendrogram<T> {
    let n = d.n();
    let mut edges: Vec<(usize, usize, T)> = d.upper_triangle().collect();
    edges.sort_by(|a, b| a.2.partial_cmp(&b.2).expect("validated matrix has no NaN"));

    let mut sets = DisjointSet::new(n);
    let mut heights = Vec::new();
    let mut partitions = Vec::new();
    let mut k = 0;
    // Zero-distance pairs are clustered from the start.
    while k < edges.len() && edges[k].2 == T::zero() {
        sets.union(edges[k].0, edges[k].1);
        k += 1;
    }
    let initial = sets.partition();
    let mut clusters = initial.len();
    while k < edges.len() && clusters > 1 {
        let level = edges[k].2;
        let mut merged = false;
        while k < edges.len() && edges[k].2 == level {
            if sets.union(edges[k].0, edges[k].1) {
                clusters -= 1;
                merged = true;
            }
            k += 1;
        }
        if merged {
            heights.push(level);
            partitions.push(sets.partition());
        }
    }
    Dendrogram {
        initial,
        heights,
        partitions,
    }
}

/// Shannon entropy in bits. Zero proportions contribute nothing.
pub fn shannon_entropy<T: Real>(proportions: &[T]) -> Result<T> {
    if proportions.is_empty() {
        return Err(Error::InvalidProportions("empty".into()));
    }
    let mut sum = T::zero();
    for &p in proportions {
        if !(p >= T::zero()) || p > T::one() {
            return Err(Error::InvalidProportions(format!("{p:?} outside [0, 1]")));
        }
        sum = sum + p;
    }
    if (sum - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::InvalidProportions(format!("sum is {sum:?}")));
    }
    let h = proportions
        .iter()
        .filter(|&&p| p > T::zero())
        .fold(T::zero(), |acc, &p| acc - p * p.log2());
    Ok(h.max(T::zero()))
}

fn partition_entropy<T: Real>(partition: &Partition, n: usize) -> T {
    let nn: T = from_usize(n);
    let props: Vec<T> = partition
        .iter()
        .map(|c| from_usize::<T>(c.len()) / nn)
        .collect();
    shannon_entropy(&props).expect("cluster proportions are a distribution")
}

/// Hierarchic social entropy `∫₀^∞ E(l) dl`, integrated exactly over the
/// breakpoints of the dendrogram.
pub fn hse<T: Real>(d: &BehavioralDistanceMatrix<T>) -> Result<T> {
    let n = d.n();
    let dendrogram = build_dendrogram(d);
    Ok(dendrogram
        .intervals()
        .fold(T::zero(), |acc, (start, end, part)| {
            acc + (end - start) * partition_entropy::<T>(part, n)
        }))
}
