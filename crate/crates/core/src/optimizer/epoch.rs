//! Per-worker training state, one epoch of sharded SGD, and the cluster
//! means all-gather.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affinity::{sample_heads, sample_noise_tails, ConditionalAffinity};
use crate::ann::ClusterAssignment;
use crate::error::{NomadError, Result};
use crate::objective::{loss_and_gradient, ClusterMeans, LossBatchSpec, Point, SparseGradient};

use super::{NegativeMode, StepScale, UpdateMode};

/// Coordinates beyond this magnitude abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// Per-epoch knobs shared by all workers.
#[derive(Debug, Clone, Copy)]
pub struct EpochParams {
    pub n_negatives: usize,
    pub local_draws: usize,
    pub batch_size: usize,
    pub negative_mode: NegativeMode,
    pub update_mode: UpdateMode,
    pub step_scale: StepScale,
    /// Points in the whole dataset, not just this shard.
    pub n_total: usize,
}

#[derive(Debug, Clone)]
struct OwnCell {
    members: Vec<usize>,
    others: Vec<usize>,
}

/// Read-only structure of a shard in local indices: the neighbor lists,
/// the head set, and which cells are sampled versus approximated.
#[derive(Debug, Clone)]
pub(crate) struct ShardTopology {
    nbr_offsets: Vec<usize>,
    nbr_local: Vec<usize>,
    nbr_weights: Vec<f64>,
    heads: Vec<usize>,
    all_local: Vec<usize>,
    local_cluster: Vec<usize>,
    remote_cells: Vec<usize>,
    own_cells: Vec<Option<OwnCell>>,
}

impl ShardTopology {
    /// Eligible local negatives and approximated cells for head `h`.
    fn cells_for(&self, h: usize, mode: NegativeMode) -> (&[usize], &[usize]) {
        match mode {
            NegativeMode::RemoteClusters => (&self.all_local, &self.remote_cells),
            NegativeMode::AllButOwnCluster => {
                let cell = self.own_cells[self.local_cluster[h]]
                    .as_ref()
                    .expect("head cluster is owned");
                (&cell.members, &cell.others)
            }
        }
    }

    fn neighbors(&self, h: usize) -> (&[usize], &[f64]) {
        let range = self.nbr_offsets[h]..self.nbr_offsets[h + 1];
        (&self.nbr_local[range.clone()], &self.nbr_weights[range])
    }
}

/// Dense scratch for accumulating one batch of sparse gradients.
#[derive(Debug, Default)]
struct BatchScratch {
    accum: Vec<Point>,
    touched: Vec<usize>,
    is_touched: Vec<bool>,
    grad: SparseGradient,
}

impl BatchScratch {
    fn new(n: usize) -> Self {
        Self {
            accum: vec![[0.0; 2]; n],
            is_touched: vec![false; n],
            ..Self::default()
        }
    }
}

/// Evaluates every head of a batch against the positions as they stood at
/// the start of the batch, then applies the summed step. Returns the summed
/// surrogate loss, or the local index of the first point to leave the
/// finite range.
#[allow(clippy::too_many_arguments)]
fn apply_batch(
    topo: &ShardTopology,
    positions: &mut [Point],
    heads: &[usize],
    negatives: &[Vec<usize>],
    means: &[Point],
    cell_sizes: &[usize],
    params: &EpochParams,
    step: f64,
    scratch: &mut BatchScratch,
) -> std::result::Result<f64, usize> {
    let mut loss = 0.0;
    for (&h, negs) in heads.iter().zip(negatives) {
        let (_, remote) = topo.cells_for(h, params.negative_mode);
        let (neighbors, weights) = topo.neighbors(h);
        let spec = LossBatchSpec {
            head: h,
            neighbors,
            weights,
            local_negatives: negs,
            remote_cells: remote,
            cell_sizes,
            n_negatives: params.n_negatives,
        };
        scratch.grad.entries.clear();
        loss += loss_and_gradient(positions, &spec, means, Some(&mut scratch.grad));
        for &(id, g) in &scratch.grad.entries {
            if params.update_mode == UpdateMode::HeadOnly && id != h {
                continue;
            }
            scratch.accum[id][0] += g[0];
            scratch.accum[id][1] += g[1];
            if !scratch.is_touched[id] {
                scratch.is_touched[id] = true;
                scratch.touched.push(id);
            }
        }
    }
    let mut diverged = None;
    for &id in &scratch.touched {
        let p = &mut positions[id];
        p[0] -= step * scratch.accum[id][0];
        p[1] -= step * scratch.accum[id][1];
        scratch.accum[id] = [0.0; 2];
        scratch.is_touched[id] = false;
        if diverged.is_none() && !(p[0].abs() <= DIVERGENCE_LIMIT && p[1].abs() <= DIVERGENCE_LIMIT) {
            diverged = Some(id);
        }
    }
    scratch.touched.clear();
    match diverged {
        Some(id) => Err(id),
        None => Ok(loss),
    }
}

/// A worker's exclusive slice of the layout and everything it needs to
/// train it without touching other shards.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    /// Global ids of owned points, ascending.
    points: Vec<usize>,
    /// Positions of owned points, indexed like `points`.
    pub positions: Vec<Point>,
    topo: ShardTopology,
    rng: ChaCha8Rng,
}

/// Seeds the worker's private stream from the global seed and its id.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

impl WorkerState {
    pub fn new(
        id: usize,
        points: Vec<usize>,
        owned_clusters: &[usize],
        layout: &[Point],
        affinity: &ConditionalAffinity,
        clusters: &ClusterAssignment,
        seed: u64,
    ) -> Result<Self> {
        let n_clusters = clusters.n_clusters();
        let mut local_of = std::collections::HashMap::with_capacity(points.len());
        for (l, &g) in points.iter().enumerate() {
            local_of.insert(g, l);
        }
        let mut nbr_offsets = vec![0];
        let mut nbr_local = Vec::new();
        let mut nbr_weights = Vec::new();
        let mut heads = Vec::new();
        for (l, &g) in points.iter().enumerate() {
            for (&j, &w) in affinity.neighbors(g).iter().zip(affinity.weights(g)) {
                let Some(&lj) = local_of.get(&j) else {
                    return Err(NomadError::Internal(format!(
                        "edge {g} -> {j} leaves worker {id}'s shard"
                    )));
                };
                nbr_local.push(lj);
                nbr_weights.push(w);
            }
            nbr_offsets.push(nbr_local.len());
            if affinity.is_head(g) {
                heads.push(l);
            }
        }
        let local_cluster: Vec<usize> = points.iter().map(|&g| clusters.assignment[g]).collect();
        let mut owned = vec![false; n_clusters];
        owned_clusters.iter().for_each(|&r| owned[r] = true);
        let remote_cells = (0..n_clusters).filter(|&r| !owned[r]).collect();
        let mut own_cells: Vec<Option<OwnCell>> = vec![None; n_clusters];
        for &r in owned_clusters {
            own_cells[r] = Some(OwnCell {
                members: (0..points.len()).filter(|&l| local_cluster[l] == r).collect(),
                others: (0..n_clusters).filter(|&o| o != r).collect(),
            });
        }
        Ok(Self {
            id,
            positions: points.iter().map(|&g| layout[g]).collect(),
            topo: ShardTopology {
                nbr_offsets,
                nbr_local,
                nbr_weights,
                heads,
                all_local: (0..points.len()).collect(),
                local_cluster,
                remote_cells,
                own_cells,
            },
            points,
            rng: worker_rng(seed, id),
        })
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn n_heads(&self) -> usize {
        self.topo.heads.len()
    }

    /// Runs one pass of `n_heads` sampled heads against the stale means.
    /// Each batch draws all of its heads first, then each head's negatives.
    /// Returns the summed surrogate loss and the number of heads processed.
    pub fn train_epoch(
        &mut self,
        means: &ClusterMeans,
        cell_sizes: &[usize],
        lr: f64,
        params: &EpochParams,
        epoch: usize,
    ) -> Result<(f64, usize)> {
        let total = self.topo.heads.len();
        if total == 0 {
            return Ok((0.0, 0));
        }
        let mut scratch = BatchScratch::new(self.positions.len());
        let mut loss_sum = 0.0;
        let mut done = 0;
        while done < total {
            let b = params.batch_size.min(total - done);
            let step = match params.step_scale {
                StepScale::BatchMean => lr / b as f64,
                StepScale::PerPoint => lr / params.n_total as f64,
            };
            let heads = sample_heads(&self.topo.heads, b, &mut self.rng)?;
            let mut negatives = Vec::with_capacity(b);
            for &h in &heads {
                let (eligible, _) = self.topo.cells_for(h, params.negative_mode);
                negatives.push(sample_noise_tails(eligible, params.local_draws, &mut self.rng)?);
            }
            loss_sum += apply_batch(
                &self.topo,
                &mut self.positions,
                &heads,
                &negatives,
                &means.means,
                cell_sizes,
                params,
                step,
                &mut scratch,
            )
            .map_err(|local| NomadError::Divergence {
                epoch,
                head: self.points[local],
            })?;
            done += b;
        }
        Ok((loss_sum, total))
    }

    /// Means of the clusters this worker owns, as a full-width message.
    pub fn means_message(&self, n_clusters: usize, epoch: usize) -> MeansMessage {
        MeansMessage::from_points(self.id, &self.topo.local_cluster, &self.positions, n_clusters, epoch)
    }
}

/// What one worker contributes to the all-gather: a `C x 2` means matrix and
/// `C` counts, zero for clusters it does not hold.
#[derive(Debug, Clone, PartialEq)]
pub struct MeansMessage {
    pub worker: usize,
    pub epoch: usize,
    pub means: Vec<Point>,
    pub counts: Vec<usize>,
}

impl MeansMessage {
    /// Sums positions in the given order (ascending global id for shards).
    pub fn from_points(
        worker: usize,
        cluster_of: &[usize],
        positions: &[Point],
        n_clusters: usize,
        epoch: usize,
    ) -> Self {
        let cm = ClusterMeans::from_positions(positions, cluster_of, n_clusters, epoch);
        Self {
            worker,
            epoch,
            means: cm.means,
            counts: cm.counts,
        }
    }

    /// Number of scalar values carried.
    pub fn payload_len(&self) -> usize {
        2 * self.means.len() + self.counts.len()
    }
}

/// Traffic observed on the means exchange during one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpochTraffic {
    pub epoch: usize,
    pub messages: usize,
    /// Scalars carried across all messages.
    pub payload_values: usize,
}

/// The only channel between workers. It carries [`MeansMessage`]s and
/// nothing else, and keeps a per-epoch tally of what crossed it.
#[derive(Debug, Default)]
pub struct MeansExchange {
    pending: Vec<MeansMessage>,
    log: Vec<EpochTraffic>,
}

impl MeansExchange {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&mut self, msg: MeansMessage) {
        self.pending.push(msg);
    }

    /// Merges everything posted since the last call into the snapshot all
    /// workers will read during the next epoch.
    pub fn all_gather(&mut self, n_clusters: usize, epoch: usize) -> Result<ClusterMeans> {
        let msgs = std::mem::take(&mut self.pending);
        self.log.push(EpochTraffic {
            epoch,
            messages: msgs.len(),
            payload_values: msgs.iter().map(MeansMessage::payload_len).sum(),
        });
        merge_messages(&msgs, n_clusters, epoch)
    }

    pub fn traffic(&self) -> &[EpochTraffic] {
        &self.log
    }

    pub fn into_traffic(self) -> Vec<EpochTraffic> {
        self.log
    }
}

fn merge_messages(msgs: &[MeansMessage], n_clusters: usize, epoch: usize) -> Result<ClusterMeans> {
    let mut means = vec![[0.0; 2]; n_clusters];
    let mut counts = vec![0usize; n_clusters];
    let mut contributors = vec![0usize; n_clusters];
    for msg in msgs {
        if msg.means.len() != n_clusters || msg.counts.len() != n_clusters {
            return Err(NomadError::Internal(format!(
                "worker {} sent a means message of the wrong width",
                msg.worker
            )));
        }
        for r in 0..n_clusters {
            let c = msg.counts[r];
            if c == 0 {
                continue;
            }
            contributors[r] += 1;
            if contributors[r] == 1 {
                means[r] = msg.means[r];
            } else {
                // a cluster split across workers: count-weighted combination
                let total = (counts[r] + c) as f64;
                for (m, v) in means[r].iter_mut().zip(msg.means[r]) {
                    *m = (*m * counts[r] as f64 + v * c as f64) / total;
                }
            }
            counts[r] += c;
        }
    }
    if let Some(r) = counts.iter().position(|&c| c == 0) {
        return Err(NomadError::Internal(format!("no worker reported cluster {r}")));
    }
    Ok(ClusterMeans {
        means,
        counts,
        epoch_stamp: epoch,
    })
}

/// One worker's view of the layout: the global ids it holds and their
/// positions.
#[derive(Debug, Clone, Copy)]
pub struct WorkerView<'a> {
    pub points: &'a [usize],
    pub positions: &'a [Point],
}

/// All-gathers cluster means from per-worker layouts. Every point must be
/// held by exactly one worker.
pub fn gather_means(
    views: &[WorkerView<'_>],
    clusters: &ClusterAssignment,
    epoch: usize,
) -> Result<ClusterMeans> {
    let n = clusters.assignment.len();
    let mut seen = vec![false; n];
    for v in views {
        if v.points.len() != v.positions.len() {
            return Err(NomadError::Internal("worker view ids and positions differ".into()));
        }
        for &g in v.points {
            if g >= n || std::mem::replace(&mut seen[g], true) {
                return Err(NomadError::Internal(format!(
                    "point {g} is out of range or held by two workers"
                )));
            }
        }
    }
    if let Some(g) = seen.iter().position(|&s| !s) {
        return Err(NomadError::Internal(format!("point {g} is held by no worker")));
    }
    let mut exchange = MeansExchange::new();
    for (w, v) in views.iter().enumerate() {
        let cluster_of: Vec<usize> = v.points.iter().map(|&g| clusters.assignment[g]).collect();
        exchange.post(MeansMessage::from_points(
            w,
            &cluster_of,
            v.positions,
            clusters.n_clusters(),
            epoch,
        ));
    }
    exchange.all_gather(clusters.n_clusters(), epoch)
}
