//! PCA initialization, sharded SGD training, and the end-to-end fit.

mod epoch;
mod pca;
mod shard;

use std::path::PathBuf;
use std::time::Instant;

pub use epoch::{
    gather_means, worker_rng, EpochParams, EpochTraffic, MeansExchange, MeansMessage, WorkerState,
    WorkerView, DIVERGENCE_LIMIT,
};
pub use pca::pca_init;
pub use shard::{shard_clusters, ShardPlan};

use crate::affinity::{build_affinity, ConditionalAffinity};
use crate::ann::{build_index, default_n_clusters, AnnIndex, IndexParams};
use crate::error::{NomadError, Result};
use crate::io::{save_layout, LayoutMatrix, VectorDataset};
use crate::objective::{ClusterMeans, Point};

/// Which cells a head sees through their means rather than through samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum NegativeMode {
    /// Clusters owned by other workers are approximated; local points are
    /// sampled.
    #[default]
    RemoteClusters,
    /// Every cluster except the head's own is approximated.
    AllButOwnCluster,
}

/// Which points receive the gradient of a head's loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum UpdateMode {
    /// Head, neighbors and sampled negatives.
    #[default]
    All,
    /// Only the head itself.
    HeadOnly,
}

/// How a batch's summed gradient is scaled before the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum StepScale {
    /// Divide by the number of heads in the batch.
    #[default]
    BatchMean,
    /// Divide by the dataset size.
    PerPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub k: usize,
    pub n_negatives: usize,
    pub local_draws: usize,
    pub batch_size: usize,
    pub workers: usize,
    /// `None` picks a size-based default.
    pub n_clusters: Option<usize>,
    pub seed: u64,
    /// `None` means `n / 10`.
    pub lr0: Option<f64>,
    pub kmeans_max_iters: usize,
    pub kmeans_tol_factor: f64,
    pub negative_mode: NegativeMode,
    pub update_mode: UpdateMode,
    pub step_scale: StepScale,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            k: 15,
            n_negatives: 5,
            local_draws: 5,
            batch_size: 1024,
            workers: 1,
            n_clusters: None,
            seed: 0,
            lr0: None,
            kmeans_max_iters: 100,
            kmeans_tol_factor: 1e-6,
            negative_mode: NegativeMode::default(),
            update_mode: UpdateMode::default(),
            step_scale: StepScale::default(),
        }
    }
}

impl TrainConfig {
    /// Cluster count actually used for `n` points.
    pub fn resolved_clusters(&self, n: usize) -> usize {
        self.n_clusters
            .unwrap_or_else(|| default_n_clusters(n, self.workers))
    }

    pub fn resolved_lr0(&self, n: usize) -> f64 {
        self.lr0.unwrap_or(n as f64 / 10.0)
    }

    /// Checks every knob against the dataset size before any work starts.
    pub fn validate(&self, n: usize) -> Result<()> {
        let positive = [
            (self.k, "k"),
            (self.n_negatives, "negatives"),
            (self.local_draws, "local draws"),
            (self.batch_size, "batch size"),
            (self.workers, "workers"),
        ];
        for (v, name) in positive {
            if v == 0 {
                return Err(NomadError::param(format!("{name} must be at least 1")));
            }
        }
        let c = self.resolved_clusters(n);
        if c == 0 || c > n {
            return Err(NomadError::param(format!("clusters must be in 1..={n}, got {c}")));
        }
        if c < self.workers {
            return Err(NomadError::param(format!(
                "clusters must be ≥ workers ({c} clusters, {} workers)",
                self.workers
            )));
        }
        if let Some(lr) = self.lr0 {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(NomadError::param("learning rate must be finite and non-negative"));
            }
        }
        if !(self.kmeans_tol_factor.is_finite() && self.kmeans_tol_factor >= 0.0) {
            return Err(NomadError::param("k-means tolerance must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Linearly annealed learning rate: `lr0 * (1 - epoch / total)`.
pub fn lr_schedule(epoch: usize, total_epochs: usize, lr0: f64) -> f64 {
    lr0 * (1.0 - epoch as f64 / total_epochs as f64)
}

/// Side channels of a fit: progress lines and periodic checkpoints.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub progress: bool,
    /// Dump the layout every this many epochs.
    pub checkpoint_every: Option<usize>,
    /// Directory for checkpoint files (current directory if unset).
    pub checkpoint_dir: Option<PathBuf>,
}

/// Everything a fit produced besides the layout, for inspection.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub layout: LayoutMatrix,
    pub index: AnnIndex,
    pub plan: ShardPlan,
    /// Mean per-head surrogate loss for each epoch.
    pub epoch_losses: Vec<f64>,
    pub traffic: Vec<EpochTraffic>,
}

/// Runs the whole pipeline with default side channels and returns the
/// final layout.
pub fn fit(data: &VectorDataset, config: &TrainConfig) -> Result<LayoutMatrix> {
    Ok(fit_with(data, config, &FitOptions::default())?.layout)
}

/// Index, affinity, PCA initialization, then `epochs` rounds of parallel
/// worker epochs separated by a means all-gather.
pub fn fit_with(data: &VectorDataset, config: &TrainConfig, options: &FitOptions) -> Result<FitResult> {
    let n = data.n();
    config.validate(n)?;
    let index = build_index(
        data,
        &IndexParams {
            n_clusters: config.resolved_clusters(n),
            k: config.k,
            seed: config.seed,
            max_iters: config.kmeans_max_iters,
            tol_factor: config.kmeans_tol_factor,
        },
    )?;
    let affinity = build_affinity(&index.graph);
    if affinity.heads().is_empty() {
        return Err(NomadError::Configuration(
            "no point has a neighbor; nothing to train on".into(),
        ));
    }
    let init = pca_init(data, config.seed)?;
    train(data, config, options, index, &affinity, init)
}

fn train(
    data: &VectorDataset,
    config: &TrainConfig,
    options: &FitOptions,
    index: AnnIndex,
    affinity: &ConditionalAffinity,
    init: LayoutMatrix,
) -> Result<FitResult> {
    let n = data.n();
    let clusters = &index.clusters;
    let n_clusters = clusters.n_clusters();
    let plan = shard_clusters(clusters, config.workers)?;
    let mut workers = plan
        .worker_points
        .iter()
        .zip(&plan.worker_clusters)
        .enumerate()
        .map(|(w, (points, owned))| {
            WorkerState::new(w, points.clone(), owned, &init.positions, affinity, clusters, config.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    #[cfg(debug_assertions)]
    audit_ownership(&workers, n);

    let params = EpochParams {
        n_negatives: config.n_negatives,
        local_draws: config.local_draws,
        batch_size: config.batch_size,
        negative_mode: config.negative_mode,
        update_mode: config.update_mode,
        step_scale: config.step_scale,
        n_total: n,
    };
    let lr0 = config.resolved_lr0(n);
    let mut means = ClusterMeans::from_positions(&init.positions, &clusters.assignment, n_clusters, 0);
    let mut exchange = MeansExchange::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = lr_schedule(epoch, config.epochs, lr0);
        let outcomes = run_workers(&mut workers, &means, &clusters.sizes, lr, &params, epoch, &mut exchange)?;
        // barrier passed: every worker has posted its means
        means = exchange.all_gather(n_clusters, epoch + 1)?;
        let (loss, heads) = outcomes
            .iter()
            .fold((0.0, 0usize), |(l, h), &(wl, wh)| (l + wl, h + wh));
        let mean_loss = if heads > 0 { loss / heads as f64 } else { 0.0 };
        epoch_losses.push(mean_loss);
        if options.progress {
            eprintln!(
                "epoch {:>4}  lr {:>12.6}  loss {:.6}  {:.3}s",
                epoch,
                lr,
                mean_loss,
                started.elapsed().as_secs_f64()
            );
        }
        if let Some(every) = options.checkpoint_every.filter(|&e| e > 0) {
            if (epoch + 1) % every == 0 {
                let layout = assemble(&workers, n, epoch + 1);
                let dir = options.checkpoint_dir.clone().unwrap_or_default();
                let path = dir.join(format!("layout_epoch_{:05}.csv", epoch + 1));
                save_layout(&layout, data.ids(), data.labels(), &path)?;
            }
        }
    }

    Ok(FitResult {
        layout: assemble(&workers, n, config.epochs),
        index,
        plan,
        epoch_losses,
        traffic: exchange.into_traffic(),
    })
}

/// One epoch on every worker. A single worker runs inline on the calling
/// thread; otherwise each worker gets a scoped thread and sends its means
/// back over a channel.
fn run_workers(
    workers: &mut [WorkerState],
    means: &ClusterMeans,
    sizes: &[usize],
    lr: f64,
    params: &EpochParams,
    epoch: usize,
    exchange: &mut MeansExchange,
) -> Result<Vec<(f64, usize)>> {
    let n_clusters = sizes.len();
    if let [only] = workers {
        let out = only.train_epoch(means, sizes, lr, params, epoch)?;
        exchange.post(only.means_message(n_clusters, epoch + 1));
        return Ok(vec![out]);
    }
    let (tx, rx) = std::sync::mpsc::channel::<MeansMessage>();
    let results: Vec<Result<(f64, usize)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .iter_mut()
            .map(|w| {
                let tx = tx.clone();
                scope.spawn(move || {
                    let out = w.train_epoch(means, sizes, lr, params, epoch)?;
                    tx.send(w.means_message(n_clusters, epoch + 1))
                        .map_err(|_| NomadError::Internal("means channel closed".into()))?;
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(NomadError::Internal("worker panicked".into()))))
            .collect()
    });
    drop(tx);
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut msgs: Vec<MeansMessage> = rx.into_iter().collect();
    msgs.sort_by_key(|m| m.worker);
    msgs.into_iter().for_each(|m| exchange.post(m));
    Ok(outcomes)
}

fn assemble(workers: &[WorkerState], n: usize, epoch: usize) -> LayoutMatrix {
    let mut positions: Vec<Point> = vec![[0.0; 2]; n];
    for w in workers {
        for (&g, &p) in w.points().iter().zip(&w.positions) {
            positions[g] = p;
        }
    }
    let mut layout = LayoutMatrix::new(positions);
    layout.epoch = epoch;
    layout
}

#[cfg(debug_assertions)]
fn audit_ownership(workers: &[WorkerState], n: usize) {
    let mut owner = vec![usize::MAX; n];
    for w in workers {
        for &g in w.points() {
            assert_eq!(owner[g], usize::MAX, "point {g} owned by workers {} and {}", owner[g], w.id);
            owner[g] = w.id;
        }
    }
    assert!(owner.iter().all(|&o| o != usize::MAX), "unowned point");
}
