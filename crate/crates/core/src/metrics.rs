//! Layout quality: neighborhood preservation and random triplet accuracy.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::ann::KnnGraph;
use crate::error::{NomadError, Result};
use crate::io::{LayoutMatrix, VectorDataset};

/// One evaluated metric, serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub params: Value,
    pub seed: Option<u64>,
}

impl MetricReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Which points neighborhood preservation averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpMode {
    Exact,
    /// `h` points drawn uniformly without replacement.
    Sampled(usize),
}

fn check_sizes(high_n: usize, low: &LayoutMatrix) -> Result<()> {
    if high_n != low.n() {
        return Err(NomadError::Dimension(format!(
            "vectors have {high_n} rows but the layout has {}",
            low.n()
        )));
    }
    Ok(())
}

/// The `k` smallest `(distance, id)` pairs excluding `i`, lower id first
/// on ties.
fn k_nearest(n: usize, i: usize, k: usize, dist: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(j), j)).collect();
    let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by);
        cand.truncate(k);
    }
    cand.into_iter().map(|(_, j)| j).collect()
}

fn low_sq_dist(low: &LayoutMatrix, i: usize, j: usize) -> f64 {
    let (a, b) = (low.positions[i], low.positions[j]);
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn overlap(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|x| b.contains(x)).count()
}

fn evaluated_points(n: usize, mode: NpMode, seed: u64) -> Result<Vec<usize>> {
    match mode {
        NpMode::Exact => Ok((0..n).collect()),
        NpMode::Sampled(0) => Err(NomadError::param("sampled mode needs at least one point")),
        NpMode::Sampled(h) if h >= n => Ok((0..n).collect()),
        NpMode::Sampled(h) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = sample(&mut rng, n, h).into_vec();
            pts.sort_unstable();
            Ok(pts)
        }
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let h = values.len() as f64;
    let mean = values.iter().sum::<f64>() / h;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (h - 1.0);
    (mean, (var / h).sqrt())
}

fn np_params(k: usize, mode: NpMode) -> Value {
    match mode {
        NpMode::Exact => json!({"k": k, "mode": "exact"}),
        NpMode::Sampled(h) => json!({"k": k, "mode": "sampled", "points": h}),
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(NomadError::param(format!("k must be in 1..{n}, got {k}")));
    }
    Ok(())
}

/// Mean overlap between exact k-neighborhoods in the input space and in the
/// layout. Exact mode reports a zero standard error.
pub fn neighborhood_preservation(
    high: &VectorDataset,
    low: &LayoutMatrix,
    k: usize,
    mode: NpMode,
    seed: u64,
) -> Result<MetricReport> {
    let n = high.n();
    check_sizes(n, low)?;
    check_k(k, n)?;
    let points = evaluated_points(n, mode, seed)?;
    let scores: Vec<f64> = points
        .par_iter()
        .map(|&i| {
            let hi = k_nearest(n, i, k, |j| high.sq_dist(i, j));
            let lo = k_nearest(n, i, k, |j| low_sq_dist(low, i, j));
            overlap(&hi, &lo) as f64 / k as f64
        })
        .collect();
    let (value, stderr) = mean_and_stderr(&scores);
    Ok(MetricReport {
        metric: format!("np@{k}"),
        value,
        stderr: if matches!(mode, NpMode::Exact) || points.len() == n { 0.0 } else { stderr },
        params: np_params(k, mode),
        seed: matches!(mode, NpMode::Sampled(_)).then_some(seed),
    })
}

/// Like [`neighborhood_preservation`] but takes input-space neighborhoods
/// from an ANN graph instead of brute force.
pub fn neighborhood_preservation_ann(
    graph: &KnnGraph,
    low: &LayoutMatrix,
    k: usize,
    mode: NpMode,
    seed: u64,
) -> Result<MetricReport> {
    let n = graph.n();
    check_sizes(n, low)?;
    check_k(k, n)?;
    let points = evaluated_points(n, mode, seed)?;
    let scores: Vec<f64> = points
        .par_iter()
        .map(|&i| {
            let list = graph.neighbors(i);
            let hi = &list[..k.min(list.len())];
            let lo = k_nearest(n, i, k, |j| low_sq_dist(low, i, j));
            overlap(hi, &lo) as f64 / k as f64
        })
        .collect();
    let (value, stderr) = mean_and_stderr(&scores);
    Ok(MetricReport {
        metric: format!("np@{k}-ann"),
        value,
        stderr: if points.len() == n { 0.0 } else { stderr },
        params: np_params(k, mode),
        seed: matches!(mode, NpMode::Sampled(_)).then_some(seed),
    })
}

/// Whether `d(a,b)` vs `d(a,c)` orders the same way in both spaces. Exact
/// ties agree only with exact ties.
pub fn triplet_agrees(high: &VectorDataset, low: &LayoutMatrix, a: usize, b: usize, c: usize) -> bool {
    let h: Ordering = high.sq_dist(a, b).total_cmp(&high.sq_dist(a, c));
    let l: Ordering = low_sq_dist(low, a, b).total_cmp(&low_sq_dist(low, a, c));
    h == l
}

/// Fraction of random triplets of distinct points whose distance ordering
/// is preserved, with its binomial standard error.
pub fn random_triplet_accuracy(
    high: &VectorDataset,
    low: &LayoutMatrix,
    n_triplets: usize,
    seed: u64,
) -> Result<MetricReport> {
    let n = high.n();
    check_sizes(n, low)?;
    if n < 3 {
        return Err(NomadError::param("triplet accuracy needs at least 3 points"));
    }
    if n_triplets == 0 {
        return Err(NomadError::param("need at least one triplet"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets: Vec<[usize; 3]> = (0..n_triplets)
        .map(|_| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let (lo, hi) = (a.min(b), a.max(b));
            let mut c = rng.random_range(0..n - 2);
            if c >= lo {
                c += 1;
            }
            if c >= hi {
                c += 1;
            }
            [a, b, c]
        })
        .collect();
    let agree = triplets
        .par_iter()
        .filter(|t| triplet_agrees(high, low, t[0], t[1], t[2]))
        .count();
    let p = agree as f64 / n_triplets as f64;
    Ok(MetricReport {
        metric: "triplet".into(),
        value: p,
        stderr: (p * (1.0 - p) / n_triplets as f64).sqrt(),
        params: json!({"triplets": n_triplets}),
        seed: Some(seed),
    })
}
