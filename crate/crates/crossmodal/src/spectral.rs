//! Normalized-cut spectral clustering with a deterministic seeded k-means.
//!
//! Pipeline: symmetric normalized Laplacian `L = I - D^{-1/2} A D^{-1/2}`,
//! the `c` smallest-eigenvalue eigenvectors as rows, row normalization,
//! then k-means. Isolated vertices (zero degree) keep `D^{-1/2} = 0`, end
//! up with a zero embedding row, and are assigned to the nearest center
//! with ties broken toward the lowest cluster index.

use crate::error::{Error, Result};
use crate::linalg::{sym_eig_smallest, Mat};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const KMEANS_MAX_ITERS: usize = 100;

/// Clusters the vertices of a symmetric nonnegative affinity matrix into
/// `c` groups; returns labels in `1..=c`.
pub fn spectral_cluster(affinity: &Mat, c: usize, seed: u64) -> Result<Vec<usize>> {
    let n = affinity.nrows();
    if affinity.ncols() != n {
        return Err(Error::ShapeError(format!(
            "affinity must be square, got {}x{}",
            n,
            affinity.ncols()
        )));
    }
    if c == 0 || c > n {
        return Err(Error::InvalidClusterCount { requested: c, n });
    }
    if affinity.iter().any(|&v| v < -1e-12) {
        return Err(Error::ShapeError("affinity has negative entries".into()));
    }

    let degrees: Vec<f64> = (0..n).map(|i| affinity.row(i).iter().map(|v| v.max(0.0)).sum()).collect();
    let dinv_sqrt: Vec<f64> = degrees.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();

    let lap = Mat::from_fn(n, n, |i, j| {
        let normalized = dinv_sqrt[i] * affinity[(i, j)].max(0.0) * dinv_sqrt[j];
        if i == j {
            1.0 - normalized
        } else {
            -normalized
        }
    });

    let (_, vectors) = sym_eig_smallest(&lap, c)?;

    let mut embedding = vectors;
    for i in 0..n {
        let norm = embedding.row(i).norm();
        if norm > 0.0 {
            for j in 0..c {
                embedding[(i, j)] /= norm;
            }
        }
    }

    let assignments = kmeans_rows(&embedding, c, seed);
    Ok(assignments.into_iter().map(|a| a + 1).collect())
}

/// Seeded k-means over the rows of `data`. Initialization picks the first
/// center uniformly at random, then greedily adds the point farthest from
/// the chosen set (max-min distance); all ties break toward the lowest
/// index. Empty clusters are re-seeded with the point farthest from its
/// assigned center. Returns 0-based assignments.
pub(crate) fn kmeans_rows(data: &Mat, k: usize, seed: u64) -> Vec<usize> {
    let n = data.nrows();
    debug_assert!(k >= 1 && k <= n);
    let dim = data.ncols();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let sq_dist = |i: usize, center: &[f64]| -> f64 {
        let mut s = 0.0;
        for j in 0..dim {
            let d = data[(i, j)] - center[j];
            s += d * d;
        }
        s
    };
    let row_vec = |i: usize| -> Vec<f64> { (0..dim).map(|j| data[(i, j)]).collect() };

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(row_vec(rng.random_range(0..n)));
    while centers.len() < k {
        let mut best = (0usize, -1.0f64);
        for i in 0..n {
            let d = centers.iter().map(|ctr| sq_dist(i, ctr)).fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (i, d);
            }
        }
        centers.push(row_vec(best.0));
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                let mut best = (0usize, f64::INFINITY);
                for (cidx, ctr) in centers.iter().enumerate() {
                    let d = sq_dist(i, ctr);
                    if d < best.1 {
                        best = (cidx, d);
                    }
                }
                best.0
            })
            .collect()
    };

    let mut assignments = assign(&centers);
    for _ in 0..KMEANS_MAX_ITERS {
        // Means of the assigned points.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for j in 0..dim {
                sums[a][j] += data[(i, j)];
            }
        }
        let mut reseeded: Vec<usize> = Vec::new();
        for (cidx, count) in counts.iter().enumerate() {
            if *count > 0 {
                for j in 0..dim {
                    sums[cidx][j] /= *count as f64;
                }
                centers[cidx] = std::mem::take(&mut sums[cidx]);
            }
        }
        // Re-seed empty clusters with the point farthest from its center.
        for cidx in 0..k {
            if counts[cidx] == 0 {
                let mut best = (usize::MAX, -1.0f64);
                for (i, &a) in assignments.iter().enumerate() {
                    if reseeded.contains(&i) {
                        continue;
                    }
                    let d = sq_dist(i, &centers[a]);
                    if d > best.1 {
                        best = (i, d);
                    }
                }
                if best.0 != usize::MAX {
                    centers[cidx] = row_vec(best.0);
                    reseeded.push(best.0);
                }
            }
        }

        let next = assign(&centers);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    assignments
}
