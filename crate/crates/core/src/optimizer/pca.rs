use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NomadError, Result};
use crate::io::{LayoutMatrix, VectorDataset};

/// Eigenvalue ratio below which the second component counts as degenerate.
const RANK_TOLERANCE: f64 = 1e-12;
const JITTER: f64 = 1e-4;

/// Projects the centered data onto its top two principal components and
/// standardizes each coordinate to unit variance.
///
/// The sign of each component is fixed so that its largest-magnitude
/// loading is positive. If the second eigenvalue is negligible next to the
/// first, the second coordinate is replaced by seeded uniform jitter in
/// `[-1e-4, 1e-4]` before standardization.
pub fn pca_init(data: &VectorDataset, seed: u64) -> Result<LayoutMatrix> {
    let (n, d) = (data.n(), data.dims());
    if n < 2 {
        return Err(NomadError::Dimension("PCA needs at least 2 points".into()));
    }
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(data.row(i)) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, c| f64::from(data.row(i)[c]) - mean[c]);
    let scale: f64 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;

    let (values, loadings) = top_components(&centered, 2.min(d));
    if values[0] <= 1e-24 * (1.0 + scale) || scale == 0.0 {
        return Err(NomadError::Degenerate("input data has zero variance".into()));
    }

    let mut columns: Vec<Vec<f64>> = loadings
        .iter()
        .map(|v| (&centered * v).iter().copied().collect())
        .collect();
    let degenerate_second = values.len() < 2 || values[1] < RANK_TOLERANCE * values[0];
    if degenerate_second {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let jitter = (0..n).map(|_| rng.random_range(-JITTER..=JITTER)).collect();
        if columns.len() < 2 {
            columns.push(jitter);
        } else {
            columns[1] = jitter;
        }
    }
    for col in &mut columns {
        standardize(col);
    }
    Ok(LayoutMatrix::new(
        (0..n).map(|i| [columns[0][i], columns[1][i]]).collect(),
    ))
}

/// Top eigenpairs of the covariance of `centered`, largest first, each
/// loading vector sign-normalized. Uses the Gram matrix when n < d.
fn top_components(centered: &DMatrix<f64>, count: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let (n, d) = centered.shape();
    let (eig, gram) = if n < d {
        (SymmetricEigen::new(centered * centered.transpose()), true)
    } else {
        (SymmetricEigen::new(centered.transpose() * centered), false)
    };
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut values = Vec::with_capacity(count);
    let mut loadings = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let mut v: DVector<f64> = if gram {
            let u = eig.eigenvectors.column(idx);
            let v = centered.transpose() * u;
            let norm = v.norm();
            if norm > 0.0 {
                v / norm
            } else {
                v
            }
        } else {
            eig.eigenvectors.column(idx).into_owned()
        };
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (k, &x)| if x.abs() > best.1 { (k, x.abs()) } else { best })
            .0;
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        values.push(lambda / n as f64);
        loadings.push(v);
    }
    (values, loadings)
}

fn standardize(col: &mut [f64]) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in col.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}
