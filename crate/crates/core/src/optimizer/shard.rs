use crate::ann::ClusterAssignment;
use crate::error::{NomadError, Result};

/// Which worker owns which clusters and points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    pub cluster_worker: Vec<usize>,
    /// Owned cluster ids per worker, ascending.
    pub worker_clusters: Vec<Vec<usize>>,
    /// Owned point ids per worker, ascending.
    pub worker_points: Vec<Vec<usize>>,
}

impl ShardPlan {
    pub fn n_workers(&self) -> usize {
        self.worker_points.len()
    }

    pub fn worker_counts(&self) -> Vec<usize> {
        self.worker_points.iter().map(Vec::len).collect()
    }
}

/// Longest-processing-time assignment: clusters in decreasing size order
/// (lower id first on ties) each go to the currently lightest worker (lower
/// id first on ties).
pub fn shard_clusters(clusters: &ClusterAssignment, workers: usize) -> Result<ShardPlan> {
    let c = clusters.n_clusters();
    if workers == 0 {
        return Err(NomadError::param("need at least one worker"));
    }
    if c < workers {
        return Err(NomadError::param(format!(
            "clusters must be ≥ workers ({c} clusters, {workers} workers)"
        )));
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| clusters.sizes[b].cmp(&clusters.sizes[a]).then(a.cmp(&b)));

    let mut load = vec![0usize; workers];
    let mut cluster_worker = vec![0usize; c];
    for r in order {
        let w = (0..workers).min_by_key(|&w| (load[w], w)).expect("workers >= 1");
        cluster_worker[r] = w;
        load[w] += clusters.sizes[r];
    }

    let mut worker_clusters = vec![Vec::new(); workers];
    for (r, &w) in cluster_worker.iter().enumerate() {
        worker_clusters[w].push(r);
    }
    let mut worker_points: Vec<Vec<usize>> = load.iter().map(|&l| Vec::with_capacity(l)).collect();
    for (i, &r) in clusters.assignment.iter().enumerate() {
        worker_points[cluster_worker[r]].push(i);
    }
    Ok(ShardPlan {
        cluster_worker,
        worker_clusters,
        worker_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::VectorDataset;
    use proptest::prelude::*;

    fn clusters_of_sizes(sizes: &[usize]) -> ClusterAssignment {
        let n: usize = sizes.iter().sum();
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(r, &s)| std::iter::repeat_n(r, s))
            .collect();
        let ds = VectorDataset::new((0..n).map(|v| v as f32).collect(), n, 1).unwrap();
        ClusterAssignment::from_labels(&ds, labels, sizes.len()).unwrap()
    }

    #[test]
    fn equal_clusters_split_evenly() {
        let plan = shard_clusters(&clusters_of_sizes(&[4, 4, 4, 4]), 2).unwrap();
        assert_eq!(plan.worker_clusters, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(plan.worker_counts(), vec![8, 8]);
    }

    #[test]
    fn lpt_trace() {
        // 5 -> w0; 3 -> w1; 3 -> w1 (3 < 5); 3 -> w0 (5 < 6)
        let plan = shard_clusters(&clusters_of_sizes(&[5, 3, 3, 3]), 2).unwrap();
        assert_eq!(plan.worker_clusters, vec![vec![0, 3], vec![1, 2]]);
        assert_eq!(plan.worker_counts(), vec![8, 6]);
    }

    #[test]
    fn single_worker_owns_everything() {
        let plan = shard_clusters(&clusters_of_sizes(&[2, 7, 1]), 1).unwrap();
        assert_eq!(plan.worker_clusters, vec![vec![0, 1, 2]]);
        assert_eq!(plan.worker_points[0], (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn fewer_clusters_than_workers_rejected() {
        let err = shard_clusters(&clusters_of_sizes(&[3, 3]), 4).unwrap_err();
        assert!(err.to_string().contains("clusters must be ≥ workers"));
    }

    proptest! {
        #[test]
        fn plan_is_balanced_partition(
            sizes in prop::collection::vec(1usize..40, 1..20),
            w in 1usize..6,
        ) {
            prop_assume!(sizes.len() >= w && sizes.iter().sum::<usize>() >= 2);
            let plan = shard_clusters(&clusters_of_sizes(&sizes), w).unwrap();
            prop_assert!(plan.worker_clusters.iter().all(|c| !c.is_empty()));
            let counts = plan.worker_counts();
            let total: usize = counts.iter().sum();
            prop_assert_eq!(total, sizes.iter().sum::<usize>());
            let mean = total as f64 / w as f64;
            let largest = *sizes.iter().max().unwrap() as f64;
            for &c in &counts {
                prop_assert!((c as f64 - mean).abs() <= largest);
            }
            let mut all: Vec<usize> = plan.worker_points.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..total).collect::<Vec<_>>());
        }
    }
}
