#![allow(dead_code)]

pub mod reference;

use nomad::VectorDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gaussian blobs whose centers live on a 2-D plane embedded in `d`
/// dimensions. Each blob spreads along its own random `intrinsic`-dim
/// subspace, plus a small isotropic component in all `d` directions.
/// Labels are blob ids.
pub fn planar_blobs(n: usize, d: usize, blobs: usize, intrinsic: usize, seed: u64) -> VectorDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);

    let mut centers: Vec<[f64; 2]> = Vec::new();
    while centers.len() < blobs {
        let c = [rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0)];
        if centers.iter().all(|o| (o[0] - c[0]).hypot(o[1] - c[1]) >= 7.0) {
            centers.push(c);
        }
    }
    let basis = |rng: &mut ChaCha8Rng, dims: usize| -> Vec<Vec<f64>> {
        (0..d)
            .map(|_| (0..dims).map(|_| gauss(rng) / (d as f64).sqrt()).collect())
            .collect()
    };
    let global = basis(&mut rng, 2);
    let local: Vec<Vec<Vec<f64>>> = (0..blobs).map(|_| basis(&mut rng, intrinsic)).collect();

    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let b = i % blobs;
        let z: Vec<f64> = (0..intrinsic).map(|_| gauss(&mut rng)).collect();
        let c = centers[b];
        for a in 0..d {
            let spread: f64 = local[b][a].iter().zip(&z).map(|(u, v)| u * v).sum();
            let v = global[a][0] * c[0] + global[a][1] * c[1] + spread + 0.002 * gauss(&mut rng);
            data.push(v as f32);
        }
        labels.push(format!("blob{b}"));
    }
    VectorDataset::new(data, n, d).unwrap().with_labels(labels).unwrap()
}

/// Isotropic Gaussian blobs with random centers, labelled by blob.
pub fn gaussian_blobs(n: usize, d: usize, blobs: usize, spread: f64, seed: u64) -> VectorDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..blobs)
        .map(|_| (0..d).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let b = i % blobs;
        for c in &centers[b] {
            data.push((c + rng.sample::<f64, _>(StandardNormal)) as f32);
        }
        labels.push(format!("blob{b}"));
    }
    VectorDataset::new(data, n, d).unwrap().with_labels(labels).unwrap()
}
