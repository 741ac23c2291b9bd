//! Cross-modal subspace clustering with a pairwise-consensus penalty.
//!
//! Every modality `X_I` (d_I x n) learns a self-expressive coefficient
//! matrix `Z_I` (n x n, zero diagonal) while a shared consensus graph `Z`
//! pulls the per-modality structures together:
//!
//! ```text
//! min  sum_I ( w_I ||X_I - X_I Z_I||_F^2 + lambda1 ||Z_I||_F^2
//!              + lambda3 ||Z_I - Z||_F^2 )      s.t. diag(Z_I) = 0
//! ```
//!
//! With `Z` fixed, column `i` of `Z_I` has the closed form
//! `(w_I Xb^T Xb + (lambda1 + lambda3) I)^{-1} (w_I Xb^T x_i + lambda3 z*_i)`
//! where `Xb` drops column `i`; with all `Z_I` fixed, the optimal consensus
//! is their entrywise mean. Both block updates are exact minimizers of the
//! jointly convex objective, so alternating them descends monotonically to
//! the global optimum. The consensus affinity `(|Z^T| + |Z|)/2` then feeds
//! normalized-cut spectral clustering (see [`crate::spectral`]).
//!
//! Column updates within a sweep are independent and run data-parallel;
//! the per-column systems share one Cholesky factorization of the full
//! regularized Gram matrix, corrected per column by a rank-one downdate
//! (the plain per-column solve is kept as the reference path and the two
//! agree to machine precision).

use nalgebra::{Cholesky, DVector};

use crate::dataset::PairedDataset;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::linalg::{frobenius_norm, solve_linear, Mat};

/// Parameters of the consensus subspace-clustering objective.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CscParams {
    /// Structure penalty weight on `||Z_I||_F^2`; must be positive (it also
    /// guarantees the per-column systems are nonsingular).
    pub lambda1: f64,
    /// Pairwise-consensus weight on `||Z_I - Z||_F^2` (twice the coupling
    /// weight of the equivalent two-matrix formulation).
    pub lambda3: f64,
    /// Per-modality weights `w_I`; `None` means `1/m` for each of the `m`
    /// modalities.
    pub modality_weights: Option<Vec<f64>>,
    /// Cap on outer sweeps.
    pub max_outer_iters: usize,
    /// Relative objective-change threshold for convergence.
    pub tol: f64,
    /// Optional neighborhood restriction: each column is represented using
    /// only its `k` nearest samples (Euclidean, in the concatenated feature
    /// space); all other coefficients stay zero.
    pub knn_restrict: Option<usize>,
}

impl Default for CscParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda3: 1.0,
            modality_weights: None,
            max_outer_iters: 100,
            tol: 1e-6,
            knn_restrict: None,
        }
    }
}

impl CscParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) {
            return Err(Error::InvalidConfig("lambda1 must be positive".into()));
        }
        if !(self.lambda3 >= 0.0) {
            return Err(Error::InvalidConfig("lambda3 must be nonnegative".into()));
        }
        if let Some(k) = self.knn_restrict {
            if k == 0 {
                return Err(Error::InvalidConfig("knn_restrict must be positive".into()));
            }
        }
        Ok(())
    }

    /// Effective modality weights for an `m`-modality dataset.
    pub fn resolved_weights(&self, m: usize) -> Result<Vec<f64>> {
        match &self.modality_weights {
            None => Ok(vec![1.0 / m as f64; m]),
            Some(w) => {
                if w.len() != m {
                    return Err(Error::ShapeError(format!("{} weights for {} modalities", w.len(), m)));
                }
                if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidConfig("modality weights must be finite and nonnegative".into()));
                }
                if w.iter().all(|&v| v == 0.0) {
                    return Err(Error::InvalidConfig("at least one modality weight must be positive".into()));
                }
                Ok(w.clone())
            }
        }
    }
}

/// Result of a consensus subspace-clustering fit.
#[derive(Clone, Debug)]
pub struct CscState {
    /// Per-modality self-representations, zero diagonal.
    pub z_list: Vec<Mat>,
    /// Consensus graph, the entrywise mean of `z_list`.
    pub consensus: Mat,
    /// Objective value at the zero initialization and after every outer
    /// sweep; non-increasing.
    pub objective_trace: Vec<f64>,
    /// Outer sweeps actually run.
    pub iterations: usize,
    /// Whether the relative objective change dropped below `tol`.
    pub converged: bool,
}

/// Closed-form update of a single column of `Z_I` given the consensus.
///
/// `x` is the modality (d x n), `i` the 0-based column, `z_star` the i-th
/// consensus column with entry `i` removed (length n-1). Returns the new
/// coefficient vector over the remaining n-1 samples.
pub fn csc_column_update(
    x: &Mat,
    i: usize,
    z_star: &DVector<f64>,
    weight: f64,
    lambda1: f64,
    lambda3: f64,
) -> Result<DVector<f64>> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::DegenerateProblem("need at least 2 samples to self-express".into()));
    }
    if i >= n {
        return Err(Error::ShapeError(format!("column {i} out of range {n}")));
    }
    if z_star.len() != n - 1 {
        return Err(Error::ShapeError(format!("z_star has {} entries, expected {}", z_star.len(), n - 1)));
    }
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut xb = Mat::zeros(x.nrows(), n - 1);
    for (dst, &src) in others.iter().enumerate() {
        xb.set_column(dst, &x.column(src));
    }
    let xi = x.column(i).clone_owned();
    let gram = xb.transpose() * &xb;
    let system = gram * weight + Mat::identity(n - 1, n - 1) * (lambda1 + lambda3);
    let rhs_vec = xb.transpose() * xi * weight + z_star * lambda3;
    let rhs = Mat::from_column_slice(n - 1, 1, rhs_vec.as_slice());
    let sol = solve_linear(&system, &rhs)?;
    Ok(DVector::from_column_slice(sol.as_slice()))
}

/// Entrywise mean of the per-modality representations; for two modalities
/// this is exactly `(Z_A + Z_B) / 2`, the stationary consensus.
pub fn consensus_update(z_list: &[Mat]) -> Result<Mat> {
    if z_list.is_empty() {
        return Err(Error::ShapeError("no representations to average".into()));
    }
    let (r, c) = (z_list[0].nrows(), z_list[0].ncols());
    let mut sum = Mat::zeros(r, c);
    for (idx, z) in z_list.iter().enumerate() {
        if z.nrows() != r || z.ncols() != c {
            return Err(Error::ShapeError(format!(
                "representation {} is {}x{}, expected {}x{}",
                idx,
                z.nrows(),
                z.ncols(),
                r,
                c
            )));
        }
        sum += z;
    }
    Ok(sum / z_list.len() as f64)
}

/// Exact objective value for a candidate state.
pub fn csc_objective(
    ds: &PairedDataset,
    z_list: &[Mat],
    consensus: &Mat,
    params: &CscParams,
) -> Result<f64> {
    let weights = params.resolved_weights(ds.n_modalities())?;
    if z_list.len() != ds.n_modalities() {
        return Err(Error::ShapeError(format!(
            "{} representations for {} modalities",
            z_list.len(),
            ds.n_modalities()
        )));
    }
    let mut total = 0.0;
    for (i, z) in z_list.iter().enumerate() {
        let x = ds.modality(i);
        let resid = x - x * z;
        total += weights[i] * frobenius_norm(&resid).powi(2);
        total += params.lambda1 * frobenius_norm(z).powi(2);
        total += params.lambda3 * frobenius_norm(&(z - consensus)).powi(2);
    }
    Ok(total)
}

// Per-modality factorization shared by all column updates of a sweep. The
// full regularized Gram G = w X^T X + (l1 + l3) I is inverted once; the
// column-i system (G with row/column i deleted) is recovered from G^{-1}
// by a rank-one correction.
struct ModalityFactor {
    /// w * X^T X
    gram_scaled: Mat,
    /// (w * X^T X + (lambda1 + lambda3) I)^{-1}
    inv: Mat,
}

fn factor_modality(x: &Mat, weight: f64, ridge: f64) -> Result<ModalityFactor> {
    let n = x.ncols();
    let gram_scaled = x.transpose() * x * weight;
    let system = &gram_scaled + Mat::identity(n, n) * ridge;
    let inv = match Cholesky::new(system.clone()) {
        Some(chol) => chol.inverse(),
        // lambda1 > 0 makes this SPD; fall back to a generic solve if the
        // factorization is defeated numerically.
        None => solve_linear(&system, &Mat::identity(n, n))?,
    };
    Ok(ModalityFactor { gram_scaled, inv })
}

/// One full sweep over the columns of one modality at fixed consensus.
/// Solves every deleted-row/column system through the shared inverse:
/// with u = G^{-1} b (b the right-hand side padded with 0 at entry i) and
/// v = G^{-1} e_i, the restricted solution is u - (u_i / v_i) v, which has
/// an exactly zero i-th entry.
fn sweep_modality(factor: &ModalityFactor, consensus: &Mat, lambda3: f64, exec: ExecMode) -> Mat {
    let n = factor.gram_scaled.ncols();
    let mut b = factor.gram_scaled.clone();
    if lambda3 > 0.0 {
        b += consensus * lambda3;
    }
    for i in 0..n {
        b[(i, i)] = 0.0;
    }
    let cols = map_indexed(exec, n, |i| {
        let u = &factor.inv * b.column(i);
        let scale = u[i] / factor.inv[(i, i)];
        let mut z = u - factor.inv.column(i) * scale;
        z[i] = 0.0;
        z
    });
    let mut z = Mat::zeros(n, n);
    for (i, col) in cols.into_iter().enumerate() {
        z.set_column(i, &col);
    }
    z
}

/// K-nearest-neighbor lists in the concatenated feature space, weighted by
/// the modality weights (consistent with the objective's data terms).
fn neighbor_lists(ds: &PairedDataset, weights: &[f64], k: usize) -> Vec<Vec<usize>> {
    let n = ds.n_samples();
    let k = k.min(n - 1);
    let mut sq = Mat::zeros(n, n);
    for (idx, x) in ds.modalities().iter().enumerate() {
        let gram = x.transpose() * x;
        for i in 0..n {
            for j in 0..n {
                sq[(i, j)] += weights[idx] * (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]);
            }
        }
    }
    (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| sq[(i, a)].total_cmp(&sq[(i, b)]).then(a.cmp(&b)));
            order.truncate(k);
            order.sort_unstable();
            order
        })
        .collect()
}

fn sweep_modality_knn(
    x: &Mat,
    weight: f64,
    ridge: f64,
    lambda3: f64,
    consensus: &Mat,
    neighbors: &[Vec<usize>],
    exec: ExecMode,
) -> Result<Mat> {
    let n = x.ncols();
    let cols = map_indexed(exec, n, |i| -> Result<(usize, Vec<(usize, f64)>)> {
        let support = &neighbors[i];
        let k = support.len();
        let mut xs = Mat::zeros(x.nrows(), k);
        for (dst, &src) in support.iter().enumerate() {
            xs.set_column(dst, &x.column(src));
        }
        let xi = x.column(i).clone_owned();
        let system = xs.transpose() * &xs * weight + Mat::identity(k, k) * ridge;
        let mut rhs = xs.transpose() * xi * weight;
        if lambda3 > 0.0 {
            for (dst, &src) in support.iter().enumerate() {
                rhs[dst] += lambda3 * consensus[(src, i)];
            }
        }
        let sol = solve_linear(&system, &Mat::from_column_slice(k, 1, rhs.as_slice()))?;
        Ok((i, support.iter().copied().zip(sol.as_slice().iter().copied()).collect()))
    });
    let mut z = Mat::zeros(n, n);
    for col in cols {
        let (i, entries) = col?;
        for (j, v) in entries {
            z[(j, i)] = v;
        }
    }
    Ok(z)
}

/// Fits the consensus subspace-clustering model with the default execution
/// mode. See [`csc_fit_with`].
pub fn csc_fit(ds: &PairedDataset, params: &CscParams) -> Result<CscState> {
    csc_fit_with(ds, params, ExecMode::default())
}

/// Alternates exact per-modality sweeps with consensus averaging until the
/// relative objective change drops below `tol` or `max_outer_iters` is hit.
///
/// The returned trace starts at the zero-representation objective and is
/// non-increasing. Results are identical for both execution modes.
pub fn csc_fit_with(ds: &PairedDataset, params: &CscParams, exec: ExecMode) -> Result<CscState> {
    params.validate()?;
    let n = ds.n_samples();
    if n < 2 {
        return Err(Error::DegenerateProblem("need at least 2 samples to cluster".into()));
    }
    let m = ds.n_modalities();
    let weights = params.resolved_weights(m)?;
    let ridge = params.lambda1 + params.lambda3;

    let factors: Option<Vec<ModalityFactor>> = if params.knn_restrict.is_none() {
        Some(
            ds.modalities()
                .iter()
                .zip(&weights)
                .map(|(x, &w)| factor_modality(x, w, ridge))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let neighbors = params
        .knn_restrict
        .map(|k| neighbor_lists(ds, &weights, k));

    let mut z_list: Vec<Mat> = (0..m).map(|_| Mat::zeros(n, n)).collect();
    let mut consensus = Mat::zeros(n, n);
    let mut trace = vec![csc_objective(ds, &z_list, &consensus, params)?];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..params.max_outer_iters {
        for idx in 0..m {
            z_list[idx] = match (&factors, &neighbors) {
                (Some(f), _) => sweep_modality(&f[idx], &consensus, params.lambda3, exec),
                (None, Some(nb)) => sweep_modality_knn(
                    ds.modality(idx),
                    weights[idx],
                    ridge,
                    params.lambda3,
                    &consensus,
                    nb,
                    exec,
                )?,
                (None, None) => unreachable!(),
            };
        }
        consensus = consensus_update(&z_list)?;
        iterations += 1;

        let obj = csc_objective(ds, &z_list, &consensus, params)?;
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if (prev - obj).abs() <= params.tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(CscState { z_list, consensus, objective_trace: trace, iterations, converged })
}

/// Affinity matrix `(|Z^T| + |Z|)/2`: symmetric, nonnegative, zero diagonal
/// whenever `diag(Z) = 0`.
pub fn affinity_from_representation(z: &Mat) -> Mat {
    let n = z.nrows();
    Mat::from_fn(n, z.ncols(), |i, j| (z[(i, j)].abs() + z[(j, i)].abs()) * 0.5)
}

/// Gaussian affinity with the bandwidth set to the mean pairwise Euclidean
/// distance; diagonal forced to zero.
pub fn gaussian_affinity(x: &Mat) -> Result<Mat> {
    let n = x.ncols();
    if n < 2 {
        return Err(Error::DegenerateProblem("need at least 2 points for a kernel".into()));
    }
    let mut sq = Mat::zeros(n, n);
    let mut mean = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2 = (x.column(i) - x.column(j)).norm_squared();
                sq[(i, j)] = d2;
                mean += d2.sqrt();
            }
        }
    }
    let sigma = mean / (n * (n - 1)) as f64;
    if sigma == 0.0 {
        return Err(Error::DegenerateKernel);
    }
    let denom = 2.0 * sigma * sigma;
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (-sq[(i, j)] / denom).exp()
        }
    }))
}

/// Least-squares self-expression baseline on the weight-scaled vertical
/// concatenation of all modalities: a single `Z` with
/// `min ||Xhat - Xhat Z||_F^2 + lambda ||Z||_F^2`, `diag(Z) = 0`, where
/// `Xhat` stacks `sqrt(w_I) X_I`. The concatenated Gram is just the
/// weighted sum of per-modality Grams, so the stacked matrix is never
/// materialized.
pub fn lsr_concat_baseline(ds: &PairedDataset, lambda: f64, weights: Option<&[f64]>) -> Result<CscState> {
    lsr_concat_baseline_with(ds, lambda, weights, ExecMode::default())
}

/// [`lsr_concat_baseline`] with an explicit execution mode.
pub fn lsr_concat_baseline_with(
    ds: &PairedDataset,
    lambda: f64,
    weights: Option<&[f64]>,
    exec: ExecMode,
) -> Result<CscState> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig("lambda must be positive".into()));
    }
    let n = ds.n_samples();
    if n < 2 {
        return Err(Error::DegenerateProblem("need at least 2 samples to cluster".into()));
    }
    let m = ds.n_modalities();
    let params = CscParams {
        lambda1: lambda,
        lambda3: 0.0,
        modality_weights: weights.map(|w| w.to_vec()),
        ..CscParams::default()
    };
    let w = params.resolved_weights(m)?;

    let mut gram_scaled = Mat::zeros(n, n);
    for (x, &wi) in ds.modalities().iter().zip(&w) {
        if wi > 0.0 {
            gram_scaled += x.transpose() * x * wi;
        }
    }
    let system = &gram_scaled + Mat::identity(n, n) * lambda;
    let inv = match Cholesky::new(system.clone()) {
        Some(chol) => chol.inverse(),
        None => solve_linear(&system, &Mat::identity(n, n))?,
    };
    let factor = ModalityFactor { gram_scaled, inv };
    let z = sweep_modality(&factor, &Mat::zeros(n, n), 0.0, exec);

    let mut objective = lambda * frobenius_norm(&z).powi(2);
    for (x, &wi) in ds.modalities().iter().zip(&w) {
        let resid = x - x * &z;
        objective += wi * frobenius_norm(&resid).powi(2);
    }
    Ok(CscState {
        z_list: vec![z.clone()],
        consensus: z,
        objective_trace: vec![objective],
        iterations: 1,
        converged: true,
    })
}
