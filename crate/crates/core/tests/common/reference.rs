//! A plain, unsharded InfoNCE t-SNE SGD loop used as an oracle for the
//! single-worker optimizer. It shares only the kernel, the index and the
//! initialization with the library.

use std::collections::HashMap;

use nomad::affinity::ConditionalAffinity;
use nomad::objective::{cauchy_kernel, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct ReferenceSgd {
    pub epochs: usize,
    pub negatives: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub seed: u64,
}

/// Gradient of `-sum_j w_j log(q_ij / (q_ij + sum_m q_im))` for one head,
/// as per-point contributions merged in the order head, neighbors,
/// negatives.
fn head_gradient(pos: &[Point], i: usize, nbrs: &[usize], w: &[f64], negs: &[usize]) -> Vec<(usize, Point)> {
    let ti = pos[i];
    let mut z = 0.0;
    for &m in negs {
        z += cauchy_kernel(ti, pos[m]);
    }
    // exact InfoNCE: the noise scale is one when every negative is drawn
    let z = 0.0 + 1.0 * z;

    let mut sens = 0.0;
    for (&j, &wj) in nbrs.iter().zip(w) {
        sens += wj / (cauchy_kernel(ti, pos[j]) + z);
    }

    let mut order: Vec<usize> = Vec::new();
    let mut merged: HashMap<usize, Point> = HashMap::new();
    let mut push = |id: usize, g: Point| {
        merged
            .entry(id)
            .and_modify(|e| {
                e[0] += g[0];
                e[1] += g[1];
            })
            .or_insert_with(|| {
                order.push(id);
                g
            });
    };

    let mut own = [0.0; 2];
    let mut pulls = Vec::new();
    for (&j, &wj) in nbrs.iter().zip(w) {
        let tj = pos[j];
        let q = cauchy_kernel(ti, tj);
        let c = 2.0 * wj * z * q / (q + z);
        let g = [c * (ti[0] - tj[0]), c * (ti[1] - tj[1])];
        own[0] += g[0];
        own[1] += g[1];
        pulls.push((j, [-g[0], -g[1]]));
    }
    let mut pushes = Vec::new();
    for &m in negs {
        let tm = pos[m];
        let q = cauchy_kernel(ti, tm);
        let c = sens * 1.0 * 2.0 * q * q;
        let g = [c * (ti[0] - tm[0]), c * (ti[1] - tm[1])];
        own[0] -= g[0];
        own[1] -= g[1];
        pushes.push((m, g));
    }
    push(i, own);
    for (id, g) in pulls.into_iter().chain(pushes) {
        push(id, g);
    }
    order.into_iter().map(|id| (id, merged[&id])).collect()
}

impl ReferenceSgd {
    pub fn run(&self, affinity: &ConditionalAffinity, init: &[Point]) -> Vec<Point> {
        let n = init.len();
        let mut pos = init.to_vec();
        let heads: Vec<usize> = (0..n).filter(|&i| !affinity.neighbors(i).is_empty()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for epoch in 0..self.epochs {
            let lr = self.lr0 * (1.0 - epoch as f64 / self.epochs as f64);
            let mut done = 0;
            while done < heads.len() {
                let b = self.batch_size.min(heads.len() - done);
                let batch: Vec<usize> = (0..b).map(|_| heads[rng.random_range(0..heads.len())]).collect();
                let negs: Vec<Vec<usize>> = batch
                    .iter()
                    .map(|_| (0..self.negatives).map(|_| rng.random_range(0..n)).collect())
                    .collect();
                let mut step: HashMap<usize, Point> = HashMap::new();
                for (&i, m) in batch.iter().zip(&negs) {
                    for (id, g) in head_gradient(&pos, i, affinity.neighbors(i), affinity.weights(i), m) {
                        let e = step.entry(id).or_insert([0.0; 2]);
                        e[0] += g[0];
                        e[1] += g[1];
                    }
                }
                let scale = lr / b as f64;
                for (id, g) in step {
                    pos[id][0] -= scale * g[0];
                    pos[id][1] -= scale * g[1];
                }
                done += b;
            }
        }
        pos
    }
}
