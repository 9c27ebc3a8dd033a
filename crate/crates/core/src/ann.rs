//! K-Means based approximate nearest neighbor index.
//!
//! Points are partitioned by Lloyd's algorithm seeded from a sign-random-
//! projection hash, and exact neighbors are searched only inside each
//! cluster. Every edge of the resulting graph therefore stays within one
//! cluster, which is what lets clusters be sharded across workers without
//! splitting any neighbor list.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{NomadError, Result};
use crate::io::VectorDataset;

/// Target cluster size used to pick a default cluster count.
pub const DEFAULT_CLUSTER_SIZE: usize = 4096;

/// Partition of the dataset into non-empty clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub assignment: Vec<usize>,
    /// Row-major `C x d` centroids in the input space.
    pub centroids: Vec<f64>,
    pub sizes: Vec<usize>,
    dims: usize,
}

impl ClusterAssignment {
    /// Builds an assignment, recomputing sizes and using member means as
    /// centroids. Fails if any cluster is empty or an index is out of range.
    pub fn from_labels(data: &VectorDataset, assignment: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if assignment.len() != data.n() {
            return Err(NomadError::Dimension(format!(
                "{} cluster labels for {} points",
                assignment.len(),
                data.n()
            )));
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a >= n_clusters) {
            return Err(NomadError::param(format!(
                "cluster index {bad} out of range for {n_clusters} clusters"
            )));
        }
        let centroids = cluster_means(data, &assignment, n_clusters);
        let sizes = count_sizes(&assignment, n_clusters);
        if let Some(r) = sizes.iter().position(|&s| s == 0) {
            return Err(NomadError::param(format!("cluster {r} is empty")));
        }
        Ok(Self {
            assignment,
            centroids,
            sizes,
            dims: data.dims(),
        })
    }

    #[inline]
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn centroid(&self, r: usize) -> &[f64] {
        &self.centroids[r * self.dims..(r + 1) * self.dims]
    }

    /// Point ids of every cluster, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &r) in self.assignment.iter().enumerate() {
            out[r].push(i);
        }
        out
    }

    /// Mean squared distance of each point to its assigned centroid.
    pub fn quantization_error(&self, data: &VectorDataset) -> f64 {
        quantization_error(data, &self.assignment, &self.centroids)
    }

    fn validate_against(&self, data: &VectorDataset) -> Result<()> {
        let c = self.n_clusters();
        if self.assignment.len() != data.n()
            || self.dims != data.dims()
            || self.centroids.len() != c * data.dims()
        {
            return Err(NomadError::param("cluster assignment does not match dataset shape"));
        }
        if self.assignment.iter().any(|&a| a >= c) || count_sizes(&self.assignment, c) != self.sizes {
            return Err(NomadError::param("cluster sizes inconsistent with assignment"));
        }
        Ok(())
    }
}

/// Default cluster count: one cluster per ~4096 points, at least one per
/// worker and at most one per point.
pub fn default_n_clusters(n: usize, workers: usize) -> usize {
    n.div_ceil(DEFAULT_CLUSTER_SIZE).max(workers).min(n).max(1)
}

/// Seeds `n_clusters` centroids from the most populous buckets of a
/// sign-random-projection hash and assigns every point to its nearest seed.
pub fn lsh_init(data: &VectorDataset, n_clusters: usize, seed: u64) -> Result<ClusterAssignment> {
    let (n, d) = (data.n(), data.dims());
    if n_clusters == 0 || n_clusters > n {
        return Err(NomadError::param(format!(
            "cluster count must be in 1..={n}, got {n_clusters}"
        )));
    }
    if n_clusters == 1 {
        return ClusterAssignment::from_labels(data, vec![0; n], 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(data.row(i)) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let n_planes = hyperplane_count(n_clusters);
    let planes: Vec<f64> = (0..n_planes * d).map(|_| rng.sample(StandardNormal)).collect();

    let mut buckets: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let row = data.row(i);
        let mut code = 0u64;
        for (b, plane) in planes.chunks_exact(d).enumerate() {
            let proj: f64 = plane
                .iter()
                .zip(row.iter().zip(&mean))
                .map(|(w, (&x, m))| w * (f64::from(x) - m))
                .sum();
            if proj > 0.0 {
                code |= 1 << b;
            }
        }
        buckets.entry(code).or_default().push(i);
    }
    let mut buckets: Vec<(u64, Vec<usize>)> = buckets.into_iter().collect();
    buckets.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    buckets.truncate(n_clusters);

    // (effective size, centroid, per-coordinate spread)
    let mut seeds: Vec<(f64, Vec<f64>, f64)> = buckets
        .iter()
        .map(|(_, members)| {
            let c = members_mean(data, members);
            let spread = (members.iter().map(|&i| sq_dist_mixed(data.row(i), &c)).sum::<f64>()
                / (members.len() * d) as f64)
                .sqrt();
            (members.len() as f64, c, spread)
        })
        .collect();

    // Too few occupied buckets: split the largest seeds by perturbation.
    while seeds.len() < n_clusters {
        let (largest, _) = seeds
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (r, s)| if s.0 > best.1 { (r, s.0) } else { best });
        seeds[largest].0 /= 2.0;
        let (size, base, spread) = seeds[largest].clone();
        let scale = if spread > 0.0 { 0.5 * spread } else { 1e-6 };
        let perturbed = base
            .iter()
            .map(|&v| v + scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        seeds.push((size, perturbed, spread));
    }

    let mut centroids: Vec<f64> = seeds.into_iter().flat_map(|s| s.1).collect();
    let mut assignment = assign_nearest(data, &centroids, n_clusters);
    repair_empty(data, &mut assignment, &mut centroids, n_clusters);
    let centroids = cluster_means(data, &assignment, n_clusters);
    let sizes = count_sizes(&assignment, n_clusters);
    Ok(ClusterAssignment {
        assignment,
        centroids,
        sizes,
        dims: d,
    })
}

/// Number of random hyperplanes: `ceil(log2(4 C))`.
pub fn hyperplane_count(n_clusters: usize) -> usize {
    let target = 4 * n_clusters as u64;
    (u64::BITS - (target - 1).leading_zeros()) as usize
}

/// Result of Lloyd iterations, with the quantization error trace. The first
/// trace entry is the error of the initial partition.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub clusters: ClusterAssignment,
    pub iterations: usize,
    pub quantization_errors: Vec<f64>,
}

/// Convergence tolerance on squared centroid displacement: `factor` times
/// the mean squared norm of the data rows.
pub fn default_tolerance(data: &VectorDataset, factor: f64) -> f64 {
    let total: f64 = (0..data.n())
        .map(|i| data.row(i).iter().map(|&x| f64::from(x).powi(2)).sum::<f64>())
        .sum();
    factor * total / data.n() as f64
}

pub fn kmeans_em(
    data: &VectorDataset,
    init: &ClusterAssignment,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansRun> {
    init.validate_against(data)?;
    let c = init.n_clusters();
    let mut assignment = init.assignment.clone();
    let mut centroids = init.centroids.clone();
    let mut errors = vec![quantization_error(data, &assignment, &centroids)];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let mut next = assign_nearest(data, &centroids, c);
        repair_empty(data, &mut next, &mut centroids, c);
        let changed = next != assignment;
        assignment = next;
        let updated = cluster_means(data, &assignment, c);
        let shift = updated
            .chunks_exact(data.dims())
            .zip(centroids.chunks_exact(data.dims()))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .fold(0.0, f64::max);
        centroids = updated;
        errors.push(quantization_error(data, &assignment, &centroids));
        if !changed || shift < tol {
            break;
        }
    }

    let sizes = count_sizes(&assignment, c);
    Ok(KMeansRun {
        clusters: ClusterAssignment {
            assignment,
            centroids,
            sizes,
            dims: data.dims(),
        },
        iterations,
        quantization_errors: errors,
    })
}

fn assign_nearest(data: &VectorDataset, centroids: &[f64], c: usize) -> Vec<usize> {
    let d = data.dims();
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            let row = data.row(i);
            let mut best = (f64::INFINITY, 0);
            for r in 0..c {
                let dist = sq_dist_mixed(row, &centroids[r * d..(r + 1) * d]);
                if dist < best.0 {
                    best = (dist, r);
                }
            }
            best.1
        })
        .collect()
}

/// Fills empty clusters by moving in the point farthest from its centroid
/// in the currently largest cluster.
fn repair_empty(data: &VectorDataset, assignment: &mut [usize], centroids: &mut [f64], c: usize) {
    let d = data.dims();
    let mut sizes = count_sizes(assignment, c);
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let donor = (0..c).fold(0, |best, r| if sizes[r] > sizes[best] { r } else { best });
        let centre = centroids[donor * d..(donor + 1) * d].to_vec();
        let mut far = (f64::NEG_INFINITY, usize::MAX);
        for (i, &a) in assignment.iter().enumerate() {
            if a == donor {
                let dist = sq_dist_mixed(data.row(i), &centre);
                if dist > far.0 {
                    far = (dist, i);
                }
            }
        }
        let moved = far.1;
        assignment[moved] = empty;
        sizes[donor] -= 1;
        sizes[empty] += 1;
        for (dst, &x) in centroids[empty * d..(empty + 1) * d].iter_mut().zip(data.row(moved)) {
            *dst = f64::from(x);
        }
    }
}

fn count_sizes(assignment: &[usize], c: usize) -> Vec<usize> {
    let mut sizes = vec![0; c];
    for &a in assignment {
        sizes[a] += 1;
    }
    sizes
}

fn cluster_means(data: &VectorDataset, assignment: &[usize], c: usize) -> Vec<f64> {
    let d = data.dims();
    let mut sums = vec![0.0f64; c * d];
    let mut counts = vec![0usize; c];
    for (i, &r) in assignment.iter().enumerate() {
        counts[r] += 1;
        for (s, &x) in sums[r * d..(r + 1) * d].iter_mut().zip(data.row(i)) {
            *s += f64::from(x);
        }
    }
    for (r, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            sums[r * d..(r + 1) * d].iter_mut().for_each(|s| *s /= cnt as f64);
        }
    }
    sums
}

fn members_mean(data: &VectorDataset, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; data.dims()];
    for &i in members {
        for (s, &x) in c.iter_mut().zip(data.row(i)) {
            *s += f64::from(x);
        }
    }
    c.iter_mut().for_each(|s| *s /= members.len() as f64);
    c
}

fn quantization_error(data: &VectorDataset, assignment: &[usize], centroids: &[f64]) -> f64 {
    let d = data.dims();
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &r)| sq_dist_mixed(data.row(i), &centroids[r * d..(r + 1) * d]))
        .sum();
    total / data.n() as f64
}

#[inline]
fn sq_dist_mixed(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let t = f64::from(x) - y;
            t * t
        })
        .sum()
}

/// Within-cluster exact k-nearest-neighbor graph in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    distances: Vec<f64>,
}

impl KnnGraph {
    /// Assembles a graph from per-point lists. Lists must already be sorted
    /// ascending by distance.
    pub fn from_lists(lists: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        let mut distances = Vec::new();
        for list in lists {
            for (j, dist) in list {
                neighbors.push(j);
                distances.push(dist);
            }
            offsets.push(neighbors.len());
        }
        Self {
            offsets,
            neighbors,
            distances,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len()
    }

    /// All directed edges `(src, dst, squared distance)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .zip(self.distances(i))
                .map(move |(&j, &dist)| (i, j, dist))
        })
    }

    /// Number of edges whose endpoints lie in different clusters.
    pub fn cross_cluster_edges(&self, clusters: &ClusterAssignment) -> usize {
        self.edges()
            .filter(|&(i, j, _)| clusters.assignment[i] != clusters.assignment[j])
            .count()
    }
}

/// Exact `k` nearest same-cluster neighbors of every point. Ties are broken
/// by the lower point id.
pub fn build_knn(data: &VectorDataset, clusters: &ClusterAssignment, k: usize) -> Result<KnnGraph> {
    if k == 0 {
        return Err(NomadError::param("k must be at least 1"));
    }
    clusters.validate_against(data)?;
    let members = clusters.members();
    let lists: Vec<Vec<(usize, f64)>> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let cell = &members[clusters.assignment[i]];
            let mut cand: Vec<(f64, usize)> = cell
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (data.sq_dist(i, j), j))
                .collect();
            let take = k.min(cand.len());
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if take < cand.len() && take > 0 {
                cand.select_nth_unstable_by(take - 1, by_dist);
                cand.truncate(take);
            }
            cand.truncate(take);
            cand.sort_unstable_by(by_dist);
            cand.into_iter().map(|(dist, j)| (j, dist)).collect()
        })
        .collect();
    Ok(KnnGraph::from_lists(lists))
}

/// Parameters of the full index build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexParams {
    pub n_clusters: usize,
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Multiplier on the mean squared data norm giving the EM tolerance.
    pub tol_factor: f64,
}

/// A built index: partition plus within-cluster neighbor graph.
#[derive(Debug, Clone)]
pub struct AnnIndex {
    pub clusters: ClusterAssignment,
    pub graph: KnnGraph,
    pub em_iterations: usize,
}

pub fn build_index(data: &VectorDataset, params: &IndexParams) -> Result<AnnIndex> {
    let init = lsh_init(data, params.n_clusters, params.seed)?;
    let tol = default_tolerance(data, params.tol_factor);
    let run = kmeans_em(data, &init, params.max_iters, tol)?;
    let graph = build_knn(data, &run.clusters, params.k)?;
    Ok(AnnIndex {
        clusters: run.clusters,
        graph,
        em_iterations: run.iterations,
    })
}

/// Writes `point_id,cluster_id` rows.
pub fn write_assignment_csv(clusters: &ClusterAssignment, ids: &[String], path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(16 * ids.len());
    writeln!(out, "point_id,cluster_id").expect("vec write");
    for (id, r) in ids.iter().zip(&clusters.assignment) {
        writeln!(out, "{id},{r}").expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| NomadError::io(path, e))
}

/// Writes `src,dst,distance` rows, one per directed edge.
pub fn write_edges_csv(graph: &KnnGraph, ids: &[String], path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(24 * graph.n_edges());
    writeln!(out, "src,dst,distance").expect("vec write");
    for (i, j, dist) in graph.edges() {
        writeln!(out, "{},{},{}", ids[i], ids[j], dist).expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| NomadError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn gaussian_data(n: usize, d: usize, seed: u64) -> VectorDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        VectorDataset::new(v, n, d).unwrap()
    }

    fn two_blobs() -> VectorDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        for b in 0..2 {
            for _ in 0..60 {
                let shift = if b == 0 { -20.0 } else { 20.0 };
                rows.push((0..5).map(|_| shift + rng.sample::<f32, _>(StandardNormal)).collect());
            }
        }
        VectorDataset::from_rows(&rows).unwrap()
    }

    #[test]
    fn hyperplanes_oversample_four_times() {
        assert_eq!(hyperplane_count(2), 3);
        assert_eq!(hyperplane_count(4), 4);
        assert_eq!(hyperplane_count(5), 5);
        assert_eq!(hyperplane_count(100), 9);
    }

    #[test]
    fn default_cluster_count_is_clamped() {
        assert_eq!(default_n_clusters(20_000, 1), 5);
        assert_eq!(default_n_clusters(100, 4), 4);
        assert_eq!(default_n_clusters(3, 8), 3);
        assert_eq!(default_n_clusters(4096, 1), 1);
    }

    #[test]
    fn one_cluster_per_point() {
        let ds = gaussian_data(12, 3, 1);
        let a = lsh_init(&ds, 12, 9).unwrap();
        assert!(a.sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let ds = VectorDataset::new(vec![1.0; 10], 10, 1).unwrap();
        let a = lsh_init(&ds, 10, 0).unwrap();
        assert!(a.sizes.iter().all(|&s| s == 1));
        let run = kmeans_em(&ds, &a, 10, 0.0).unwrap();
        assert!(run.clusters.sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn too_many_clusters_rejected() {
        let ds = gaussian_data(5, 2, 1);
        assert!(matches!(lsh_init(&ds, 6, 0), Err(NomadError::Parameter(_))));
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        let direct = a.iter().zip(b).all(|(x, y)| x == y);
        let flipped = a.iter().zip(b).all(|(x, y)| *x == 1 - *y);
        direct || flipped
    }

    #[test]
    fn separates_two_blobs() {
        let ds = two_blobs();
        let init = lsh_init(&ds, 2, 11).unwrap();
        let run = kmeans_em(&ds, &init, 100, default_tolerance(&ds, 1e-6)).unwrap();
        // blob membership from generation: first 60 rows left, rest right
        let oracle: Vec<usize> = (0..120).map(|i| usize::from(i >= 60)).collect();
        assert!(same_partition(&run.clusters.assignment, &oracle));
        let oracle_cost = ClusterAssignment::from_labels(&ds, oracle, 2)
            .unwrap()
            .quantization_error(&ds);
        assert!(run.clusters.quantization_error(&ds) <= oracle_cost + 1e-9);
    }

    #[test]
    fn lsh_is_deterministic() {
        let ds = gaussian_data(300, 8, 4);
        assert_eq!(lsh_init(&ds, 7, 5).unwrap(), lsh_init(&ds, 7, 5).unwrap());
    }

    #[test]
    fn fixed_point_returns_after_one_iteration() {
        let ds = two_blobs();
        let init = lsh_init(&ds, 2, 11).unwrap();
        let run = kmeans_em(&ds, &init, 100, 0.0).unwrap();
        let again = kmeans_em(&ds, &run.clusters, 100, 0.0).unwrap();
        assert_eq!(again.iterations, 1);
        assert_eq!(again.clusters.assignment, run.clusters.assignment);
        assert_eq!(again.clusters.centroids, run.clusters.centroids);
    }

    #[test]
    fn square_corners_converge_to_edge_midpoints() {
        // corners (0,0),(0,1),(2,0),(2,1); balanced bipartitions:
        // left/right cost 4 * 0.25 = 1.0, top/bottom cost 4 * 1 = 4.0,
        // diagonal cost 4 * 1.25 = 5.0. Left/right is optimal.
        let ds = VectorDataset::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![2.0, 0.0],
            vec![2.0, 1.0],
        ])
        .unwrap();
        let init = ClusterAssignment::from_labels(&ds, vec![0, 0, 1, 1], 2).unwrap();
        let run = kmeans_em(&ds, &init, 10, 0.0).unwrap();
        assert_eq!(run.clusters.centroid(0), &[0.0, 0.5]);
        assert_eq!(run.clusters.centroid(1), &[2.0, 0.5]);
        assert!((run.clusters.quantization_error(&ds) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn collinear_knn() {
        let ds = VectorDataset::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let c = ClusterAssignment::from_labels(&ds, vec![0, 0, 0], 1).unwrap();
        let g = build_knn(&ds, &c, 1).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[1]);
        assert_eq!(g.distances(2), &[4.0]);
    }

    #[test]
    fn singleton_cluster_has_no_neighbors() {
        let ds = VectorDataset::from_rows(&[vec![0.0], vec![1.0], vec![9.0]]).unwrap();
        let c = ClusterAssignment::from_labels(&ds, vec![0, 0, 1], 2).unwrap();
        let g = build_knn(&ds, &c, 5).unwrap();
        assert!(g.neighbors(2).is_empty());
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn knn_ties_prefer_lower_id() {
        let ds = VectorDataset::from_rows(&[vec![0.0], vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
        let c = ClusterAssignment::from_labels(&ds, vec![0; 4], 1).unwrap();
        let g = build_knn(&ds, &c, 2).unwrap();
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(1), &[3, 0]);
    }

    #[test]
    fn knn_matches_full_argsort_oracle() {
        let ds = gaussian_data(200, 6, 21);
        let c = ClusterAssignment::from_labels(&ds, vec![0; 200], 1).unwrap();
        let k = 12;
        let g = build_knn(&ds, &c, k).unwrap();
        for i in 0..200 {
            let mut row: Vec<(f64, usize)> = (0..200)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = ds.row(i)
                        .iter()
                        .zip(ds.row(j))
                        .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                        .sum();
                    (d, j)
                })
                .collect();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect: Vec<usize> = row[..k].iter().map(|p| p.1).collect();
            assert_eq!(g.neighbors(i), &expect[..]);
        }
    }

    #[test]
    fn index_edges_stay_inside_clusters() {
        let ds = gaussian_data(500, 4, 8);
        let idx = build_index(
            &ds,
            &IndexParams { n_clusters: 6, k: 10, seed: 1, max_iters: 100, tol_factor: 1e-6 },
        )
        .unwrap();
        assert_eq!(idx.graph.cross_cluster_edges(&idx.clusters), 0);
        for i in 0..ds.n() {
            let size = idx.clusters.sizes[idx.clusters.assignment[i]];
            assert_eq!(idx.graph.neighbors(i).len(), 10.min(size - 1));
            let d = idx.graph.distances(i);
            assert!(d.windows(2).all(|w| w[0] <= w[1]));
            assert!(!idx.graph.neighbors(i).contains(&i));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn quantization_error_never_increases(seed in 0u64..1000, c in 2usize..9) {
            let ds = gaussian_data(150, 3, seed);
            let init = lsh_init(&ds, c, seed).unwrap();
            let run = kmeans_em(&ds, &init, 100, 0.0).unwrap();
            for w in run.quantization_errors.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", run.quantization_errors);
            }
            prop_assert!(run.clusters.sizes.iter().all(|&s| s > 0));
            prop_assert_eq!(run.clusters.sizes.iter().sum::<usize>(), 150);
        }

        #[test]
        fn converged_points_sit_at_nearest_centroid(seed in 0u64..1000) {
            let ds = gaussian_data(120, 2, seed);
            let init = lsh_init(&ds, 4, seed).unwrap();
            let run = kmeans_em(&ds, &init, 500, 0.0).unwrap();
            let cl = &run.clusters;
            for i in 0..ds.n() {
                let own = sq_dist_mixed(ds.row(i), cl.centroid(cl.assignment[i]));
                for r in 0..cl.n_clusters() {
                    prop_assert!(own <= sq_dist_mixed(ds.row(i), cl.centroid(r)) + 1e-9);
                }
            }
        }
    }
}
