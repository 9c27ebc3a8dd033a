//! Conditional neighbor model and the head / noise-tail samplers.

use rand::Rng;

use crate::ann::{ClusterAssignment, KnnGraph};
use crate::error::{NomadError, Result};

/// Inverse-rank weights for `k` ranked neighbors: rank `t` (1-based) gets
/// weight proportional to `exp(1/t)`, normalized over the `k` ranks.
pub fn inverse_rank_weights(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(NomadError::param("inverse-rank model needs k >= 1"));
    }
    let raw: Vec<f64> = (1..=k).map(|t| (1.0 / t as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Per-head neighbor lists with their `p(j|i)` weights, in CSR form sharing
/// the layout of the source graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalAffinity {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl ConditionalAffinity {
    #[inline]
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Whether `i` has at least one neighbor and can serve as an edge head.
    #[inline]
    pub fn is_head(&self, i: usize) -> bool {
        self.offsets[i + 1] > self.offsets[i]
    }

    /// Ids of all points eligible as heads, ascending.
    pub fn heads(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_head(i)).collect()
    }
}

/// Attaches inverse-rank weights to every neighbor list, nearest first.
pub fn build_affinity(graph: &KnnGraph) -> ConditionalAffinity {
    let mut offsets = Vec::with_capacity(graph.n() + 1);
    offsets.push(0);
    let mut neighbors = Vec::with_capacity(graph.n_edges());
    let mut weights = Vec::with_capacity(graph.n_edges());
    let mut cache: Vec<Vec<f64>> = Vec::new();
    for i in 0..graph.n() {
        let list = graph.neighbors(i);
        if !list.is_empty() {
            let k = list.len();
            if cache.len() < k {
                cache.resize(k, Vec::new());
            }
            if cache[k - 1].is_empty() {
                cache[k - 1] = inverse_rank_weights(k).expect("k >= 1");
            }
            neighbors.extend_from_slice(list);
            weights.extend_from_slice(&cache[k - 1]);
        }
        offsets.push(neighbors.len());
    }
    ConditionalAffinity {
        offsets,
        neighbors,
        weights,
    }
}

/// Uniform noise distribution over edge tails, viewed through a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// `p(m in r) = size_r / n` for every cell.
    pub cell_probs: Vec<f64>,
    /// Nominal number of negatives `|M|` per head.
    pub negatives_per_head: usize,
}

impl NoiseModel {
    pub fn new(clusters: &ClusterAssignment, negatives_per_head: usize) -> Result<Self> {
        if negatives_per_head == 0 {
            return Err(NomadError::param("at least one negative per head is required"));
        }
        let n: usize = clusters.sizes.iter().sum();
        Ok(Self {
            cell_probs: clusters.sizes.iter().map(|&s| s as f64 / n as f64).collect(),
            negatives_per_head,
        })
    }
}

/// Draws `batch_size` heads i.i.d. uniformly from `eligible`.
pub fn sample_heads<R: Rng + ?Sized>(
    eligible: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if batch_size == 0 {
        return Err(NomadError::param("batch size must be at least 1"));
    }
    if eligible.is_empty() {
        return Err(NomadError::Configuration(
            "no point has a neighbor; nothing to train on".into(),
        ));
    }
    Ok((0..batch_size)
        .map(|_| eligible[rng.random_range(0..eligible.len())])
        .collect())
}

/// Draws `count` noise tails i.i.d. uniformly from `eligible`.
pub fn sample_noise_tails<R: Rng + ?Sized>(
    eligible: &[usize],
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if eligible.is_empty() {
        return Err(NomadError::param("noise tails need a non-empty eligible set"));
    }
    Ok((0..count)
        .map(|_| eligible[rng.random_range(0..eligible.len())])
        .collect())
}
