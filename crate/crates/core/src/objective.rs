//! Cauchy-kernel contrastive objectives.
//!
//! [`infonce_loss`] is the per-sample InfoNCE t-SNE loss and serves as the
//! reference. [`nomad_loss`] is the surrogate in which the negative samples
//! of selected cells are replaced by `|M| p(m in r) q(i, mu_r)`, the mean
//! position of the cell standing in for every tail drawn from it. The
//! remaining cells keep a Monte Carlo estimate from uniformly drawn local
//! tails. With no cell replaced the two losses coincide.

use crate::error::{NomadError, Result};

pub type Point = [f64; 2];

/// `1 / (1 + |a - b|^2)`.
#[inline]
pub fn cauchy_kernel(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// `-log(q(ij) / (q(ij) + sum_m q(im)))` for one positive edge and a set of
/// noise tails.
pub fn infonce_loss(positions: &[Point], i: usize, j: usize, negatives: &[usize]) -> f64 {
    let q_ij = cauchy_kernel(positions[i], positions[j]);
    let noise: f64 = negatives
        .iter()
        .map(|&m| cauchy_kernel(positions[i], positions[m]))
        .sum();
    -(q_ij / (q_ij + noise)).ln()
}

/// Low-dimensional cluster means exchanged between workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMeans {
    pub means: Vec<Point>,
    pub counts: Vec<usize>,
    pub epoch_stamp: usize,
}

impl ClusterMeans {
    /// Arithmetic mean of the positions of every cluster, summed in
    /// ascending point order.
    pub fn from_positions(
        positions: &[Point],
        assignment: &[usize],
        n_clusters: usize,
        epoch: usize,
    ) -> Self {
        let mut sums = vec![[0.0; 2]; n_clusters];
        let mut counts = vec![0; n_clusters];
        for (p, &r) in positions.iter().zip(assignment) {
            sums[r][0] += p[0];
            sums[r][1] += p[1];
            counts[r] += 1;
        }
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    [0.0; 2]
                } else {
                    [s[0] / c as f64, s[1] / c as f64]
                }
            })
            .collect();
        Self {
            means,
            counts,
            epoch_stamp: epoch,
        }
    }

    #[inline]
    pub fn n_clusters(&self) -> usize {
        self.means.len()
    }
}

/// Everything needed to evaluate the surrogate loss for one head.
#[derive(Debug, Clone, Copy)]
pub struct LossBatchSpec<'a> {
    pub head: usize,
    /// Neighbor ids, nearest first.
    pub neighbors: &'a [usize],
    /// `p(j|i)` for each neighbor.
    pub weights: &'a [f64],
    /// Tails drawn uniformly from the locally sampled cells.
    pub local_negatives: &'a [usize],
    /// Cells whose negatives are replaced by their mean.
    pub remote_cells: &'a [usize],
    /// Point count of every cell; `p(m in r) = size_r / n`.
    pub cell_sizes: &'a [usize],
    /// Nominal number of negatives `|M|`.
    pub n_negatives: usize,
}

impl LossBatchSpec<'_> {
    fn total_points(&self) -> usize {
        self.cell_sizes.iter().sum()
    }

    fn remote_points(&self) -> usize {
        self.remote_cells.iter().map(|&r| self.cell_sizes[r]).sum()
    }

    /// Scale applied to the sum of sampled local kernels:
    /// `|M| * local_mass / s`, formed from integers so that it is exactly 1
    /// when no cell is replaced and `s = |M|`.
    fn local_scale(&self) -> f64 {
        let s = self.local_negatives.len();
        if s == 0 {
            return 0.0;
        }
        let n = self.total_points();
        let local = n - self.remote_points();
        (self.n_negatives * local) as f64 / (s * n) as f64
    }

    /// Checks the batch against a layout of `n_points` rows and the means.
    pub fn validate(&self, n_points: usize, means: &ClusterMeans) -> Result<()> {
        let bad = |m: String| Err(NomadError::param(m));
        if self.head >= n_points {
            return bad(format!("head {} out of range", self.head));
        }
        if self.neighbors.len() != self.weights.len() {
            return bad("neighbor and weight lists differ in length".into());
        }
        if let Some(&j) = self
            .neighbors
            .iter()
            .chain(self.local_negatives)
            .find(|&&j| j >= n_points)
        {
            return bad(format!("point id {j} out of range"));
        }
        if self.cell_sizes.len() != means.n_clusters() {
            return bad("cell sizes and cluster means disagree on the cell count".into());
        }
        let mut seen = vec![false; self.cell_sizes.len()];
        for &r in self.remote_cells {
            if r >= seen.len() || std::mem::replace(&mut seen[r], true) {
                return bad(format!("remote cell {r} invalid or repeated"));
            }
        }
        if self.n_negatives == 0 {
            return bad("|M| must be at least 1".into());
        }
        if self.local_negatives.is_empty() && self.remote_points() < self.total_points() {
            return Err(NomadError::Configuration(
                "locally sampled cells need at least one negative draw".into(),
            ));
        }
        Ok(())
    }
}

/// Gradient entries for the points touched by one head, in first-touch
/// order: head, neighbors, then drawn negatives. Repeated ids are merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGradient {
    pub entries: Vec<(usize, Point)>,
}

impl SparseGradient {
    fn add(&mut self, id: usize, g: Point) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == id) {
            e.1[0] += g[0];
            e.1[1] += g[1];
        } else {
            self.entries.push((id, g));
        }
    }

    pub fn get(&self, id: usize) -> Option<Point> {
        self.entries.iter().find(|e| e.0 == id).map(|e| e.1)
    }
}

pub fn nomad_loss(positions: &[Point], spec: &LossBatchSpec<'_>, means: &ClusterMeans) -> Result<f64> {
    spec.validate(positions.len(), means)?;
    Ok(loss_and_gradient(positions, spec, &means.means, None))
}

/// Exact partial derivatives of [`nomad_loss`] with respect to the head,
/// its neighbors and the drawn local negatives. Cluster means are constants.
pub fn nomad_gradient(
    positions: &[Point],
    spec: &LossBatchSpec<'_>,
    means: &ClusterMeans,
) -> Result<SparseGradient> {
    spec.validate(positions.len(), means)?;
    let mut grad = SparseGradient::default();
    loss_and_gradient(positions, spec, &means.means, Some(&mut grad));
    Ok(grad)
}

/// Surrogate loss for one head, optionally accumulating its gradient.
/// Callers are responsible for a validated batch.
pub(crate) fn loss_and_gradient(
    positions: &[Point],
    spec: &LossBatchSpec<'_>,
    means: &[Point],
    grad: Option<&mut SparseGradient>,
) -> f64 {
    let ti = positions[spec.head];
    let n = spec.total_points() as f64;

    let mut mean_sum = 0.0;
    for &r in spec.remote_cells {
        mean_sum += spec.cell_sizes[r] as f64 / n * cauchy_kernel(ti, means[r]);
    }
    let mean_term = spec.n_negatives as f64 * mean_sum;

    let local_scale = spec.local_scale();
    let mut local_sum = 0.0;
    for &m in spec.local_negatives {
        local_sum += cauchy_kernel(ti, positions[m]);
    }
    let noise = mean_term + local_scale * local_sum;

    let mut loss = 0.0;
    let mut noise_sensitivity = 0.0;
    for (&j, &w) in spec.neighbors.iter().zip(spec.weights) {
        let q = cauchy_kernel(ti, positions[j]);
        loss -= w * (q / (q + noise)).ln();
        noise_sensitivity += w / (q + noise);
    }

    let Some(grad) = grad else {
        return loss;
    };

    let mut gi = [0.0; 2];
    let mut attract = Vec::with_capacity(spec.neighbors.len());
    for (&j, &w) in spec.neighbors.iter().zip(spec.weights) {
        let tj = positions[j];
        let q = cauchy_kernel(ti, tj);
        let coef = 2.0 * w * noise * q / (q + noise);
        let g = [coef * (ti[0] - tj[0]), coef * (ti[1] - tj[1])];
        gi[0] += g[0];
        gi[1] += g[1];
        attract.push((j, [-g[0], -g[1]]));
    }

    let mean_coef = noise_sensitivity * spec.n_negatives as f64;
    for &r in spec.remote_cells {
        let mu = means[r];
        let q = cauchy_kernel(ti, mu);
        let coef = mean_coef * (spec.cell_sizes[r] as f64 / n) * 2.0 * q * q;
        gi[0] -= coef * (ti[0] - mu[0]);
        gi[1] -= coef * (ti[1] - mu[1]);
    }

    let mut repel = Vec::with_capacity(spec.local_negatives.len());
    let local_coef = noise_sensitivity * local_scale;
    for &m in spec.local_negatives {
        let tm = positions[m];
        let q = cauchy_kernel(ti, tm);
        let coef = local_coef * 2.0 * q * q;
        let g = [coef * (ti[0] - tm[0]), coef * (ti[1] - tm[1])];
        gi[0] -= g[0];
        gi[1] -= g[1];
        repel.push((m, g));
    }

    grad.add(spec.head, gi);
    for (id, g) in attract.into_iter().chain(repel) {
        grad.add(id, g);
    }
    loss
}

/// Upper bound on the number of noise tuples [`enumerate_infonce_expectation`]
/// will visit.
pub const MAX_ENUMERATION: u128 = 10_000_000;

/// Exact `E_M[log(q(ij) + sum_{m in M} q(im))]` with the `|M|` tails drawn
/// i.i.d. uniformly (with repetition) from `tails`.
pub fn enumerate_infonce_expectation(
    positions: &[Point],
    i: usize,
    j: usize,
    tails: &[usize],
    n_negatives: usize,
) -> Result<f64> {
    if tails.is_empty() {
        return Err(NomadError::param("noise distribution has no support"));
    }
    let combos = (tails.len() as u128).checked_pow(n_negatives as u32);
    if combos.is_none_or(|c| c > MAX_ENUMERATION) {
        return Err(NomadError::Size(format!(
            "{}^{} noise tuples exceeds {MAX_ENUMERATION}",
            tails.len(),
            n_negatives
        )));
    }
    let q_ij = cauchy_kernel(positions[i], positions[j]);
    let qs: Vec<f64> = tails
        .iter()
        .map(|&m| cauchy_kernel(positions[i], positions[m]))
        .collect();

    // odometer over index tuples
    let mut idx = vec![0usize; n_negatives];
    let mut total = 0.0;
    let mut count = 0u64;
    loop {
        let s: f64 = idx.iter().map(|&t| qs[t]).sum();
        total += (q_ij + s).ln();
        count += 1;
        let mut pos = 0;
        loop {
            if pos == n_negatives {
                return Ok(total / count as f64);
            }
            idx[pos] += 1;
            if idx[pos] < qs.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// `log(q(ij) + |M| sum_r p(m in r) E_{m ~ cell r}[q(im)])`: the expectation
/// moved inside the logarithm, before any mean substitution.
pub fn mean_field_log_partition(
    positions: &[Point],
    i: usize,
    j: usize,
    cells: &[Vec<usize>],
    n_negatives: usize,
) -> f64 {
    let n: usize = cells.iter().map(Vec::len).sum();
    let q_ij = cauchy_kernel(positions[i], positions[j]);
    let mixed: f64 = cells
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let mean_q = c
                .iter()
                .map(|&m| cauchy_kernel(positions[i], positions[m]))
                .sum::<f64>()
                / c.len() as f64;
            c.len() as f64 / n as f64 * mean_q
        })
        .sum();
    (q_ij + n_negatives as f64 * mixed).ln()
}

/// Mean of a set of positions.
pub fn centroid(positions: &[Point], cell: &[usize]) -> Point {
    let mut c = [0.0; 2];
    for &m in cell {
        c[0] += positions[m][0];
        c[1] += positions[m][1];
    }
    [c[0] / cell.len() as f64, c[1] / cell.len() as f64]
}

/// Error of replacing the cell's mean kernel value by the kernel at the
/// cell mean: `|mean_m q(im) - q(i, mu)|`.
pub fn taylor_gap(positions: &[Point], i: usize, cell: &[usize]) -> Result<f64> {
    if cell.is_empty() {
        return Err(NomadError::param("taylor gap needs a non-empty cell"));
    }
    let ti = positions[i];
    let mean_q = cell
        .iter()
        .map(|&m| cauchy_kernel(ti, positions[m]))
        .sum::<f64>()
        / cell.len() as f64;
    Ok((mean_q - cauchy_kernel(ti, centroid(positions, cell))).abs())
}
