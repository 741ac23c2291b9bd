//! Dense numeric primitives shared by all learners: linear solves,
//! smallest-k symmetric eigenpairs, matrix norms, pairwise distances.
//!
//! Factorizations are delegated to nalgebra (Cholesky for symmetric
//! positive-definite systems, partial-pivot LU otherwise). All functions
//! here are pure and safe to call from multiple threads.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};

/// Dense column-major matrix of `f64`. Data matrices follow the
/// column-per-sample convention: `d` feature rows by `n` sample columns.
pub type Mat = DMatrix<f64>;

/// Reciprocal-condition threshold below which a solve is reported as
/// singular. Regularized systems should sit far above this; hitting it
/// usually signals a bad penalty setting.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Absolute entrywise tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Distance function between feature columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceMetric {
    /// Euclidean distance.
    L2,
    /// Sum of absolute coordinate differences.
    L1,
    /// `1 - cosine similarity`. Two zero vectors have distance 0, a zero
    /// vector against a nonzero one has distance 1.
    Cosine,
    /// Chi-square histogram distance `sum_k (x_k-y_k)^2 / (x_k+y_k+eps)`
    /// with `eps = 1e-12`. Requires nonnegative inputs.
    ChiSquare,
}

impl DistanceMetric {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceMetric::L2 => "l2",
            DistanceMetric::L1 => "l1",
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::ChiSquare => "chisq",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(DistanceMetric::L2),
            "l1" | "manhattan" => Ok(DistanceMetric::L1),
            "cosine" => Ok(DistanceMetric::Cosine),
            "chisq" | "chisquare" | "chi2" => Ok(DistanceMetric::ChiSquare),
            other => Err(Error::InvalidConfig(format!("unknown distance metric {other:?}"))),
        }
    }
}

const CHI_SQUARE_EPS: f64 = 1e-12;

/// Checks that every entry of `m` is finite (no NaN/Inf).
pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Builds a matrix from sample rows, validating rectangularity and
/// finiteness.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::ShapeError("matrix must have at least one row and one column".into()));
    }
    let cols = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::ShapeError(format!(
                "row {} has {} entries, expected {}",
                i,
                row.len(),
                cols
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeError(format!("non-finite entry at row {i}, column {j}")));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Mat::from_row_slice(rows.len(), cols, &flat))
}

/// Solves `A X = B` for square `A` by direct factorization.
///
/// Symmetric positive-definite inputs take the Cholesky path, everything
/// else partial-pivot LU. A reciprocal-condition estimate below
/// [`RCOND_THRESHOLD`] is reported as [`Error::SingularSystem`].
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeError(format!("A must be square, got {}x{}", n, a.ncols())));
    }
    if b.nrows() != n {
        return Err(Error::ShapeError(format!(
            "B has {} rows, expected {} to match A",
            b.nrows(),
            n
        )));
    }

    if max_asymmetry(a) <= SYMMETRY_TOLERANCE {
        if let Some(chol) = Cholesky::new(a.clone()) {
            let diag: Vec<f64> = (0..n).map(|i| chol.l_dirty()[(i, i)]).collect();
            let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let dmax = diag.iter().cloned().fold(0.0_f64, f64::max);
            // L's diagonal spread squares to an eigenvalue-spread estimate.
            let rcond = if dmax > 0.0 { (dmin / dmax).powi(2) } else { 0.0 };
            if !rcond.is_finite() || rcond < RCOND_THRESHOLD {
                return Err(Error::SingularSystem { rcond });
            }
            return Ok(chol.solve(b));
        }
        // Symmetric but indefinite; fall through to LU.
    }

    let lu = a.clone().lu();
    let u = lu.u();
    let mut umin = f64::INFINITY;
    let mut umax = 0.0_f64;
    for i in 0..n {
        let v = u[(i, i)].abs();
        umin = umin.min(v);
        umax = umax.max(v);
    }
    let rcond = if umax > 0.0 { umin / umax } else { 0.0 };
    if !rcond.is_finite() || rcond < RCOND_THRESHOLD {
        return Err(Error::SingularSystem { rcond });
    }
    lu.solve(b).ok_or(Error::SingularSystem { rcond })
}

fn max_asymmetry(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    dev
}

/// Returns the `k` smallest eigenvalues (ascending) of a symmetric matrix
/// together with the matching orthonormal eigenvectors as columns.
pub fn sym_eig_smallest(s: &Mat, k: usize) -> Result<(Vec<f64>, Mat)> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::ShapeError(format!("matrix must be square, got {}x{}", n, s.ncols())));
    }
    let dev = max_asymmetry(s);
    if dev > SYMMETRY_TOLERANCE {
        return Err(Error::AsymmetricInput { max_dev: dev });
    }
    if k == 0 || k > n {
        return Err(Error::ShapeError(format!("k = {k} out of range 1..={n}")));
    }

    // Symmetrize exactly so the decomposition sees S = S^T.
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let values: Vec<f64> = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Mat::zeros(n, k);
    for (out_col, &idx) in order.iter().take(k).enumerate() {
        vectors.set_column(out_col, &eig.eigenvectors.column(idx));
    }
    Ok((values, vectors))
}

/// l21 norm: sum over rows of the row-wise l2 norms.
pub fn l21_norm(m: &Mat) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).norm()).sum()
}

/// Frobenius norm: square root of the sum of squared entries.
pub fn frobenius_norm(m: &Mat) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Pairwise distances between the columns of `x` (d x n) and `y` (d x m),
/// returned as an n x m matrix with entry `(i, j)` the distance between
/// column `i` of `x` and column `j` of `y`.
pub fn pairwise_distances(x: &Mat, y: &Mat, metric: DistanceMetric) -> Result<Mat> {
    pairwise_distances_with(x, y, metric, ExecMode::default())
}

/// [`pairwise_distances`] with an explicit execution mode.
pub fn pairwise_distances_with(x: &Mat, y: &Mat, metric: DistanceMetric, mode: ExecMode) -> Result<Mat> {
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeError(format!(
            "feature dimensions differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if metric == DistanceMetric::ChiSquare {
        for (name, m) in [("x", x), ("y", y)] {
            if m.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidForMetric {
                    metric: "chisq".into(),
                    reason: format!("matrix {name} has negative entries"),
                });
            }
        }
    }

    let n = x.ncols();
    let m = y.ncols();
    let rows = map_indexed(mode, n, |i| {
        let xi = x.column(i);
        let mut row = vec![0.0; m];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = column_distance(&xi, &y.column(j), metric);
        }
        row
    });
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Mat::from_row_slice(n, m, &flat))
}

fn column_distance(
    a: &nalgebra::DVectorView<'_, f64>,
    b: &nalgebra::DVectorView<'_, f64>,
    metric: DistanceMetric,
) -> f64 {
    match metric {
        DistanceMetric::L2 => {
            let mut s = 0.0;
            for k in 0..a.len() {
                let d = a[k] - b[k];
                s += d * d;
            }
            s.sqrt()
        }
        DistanceMetric::L1 => (0..a.len()).map(|k| (a[k] - b[k]).abs()).sum(),
        DistanceMetric::Cosine => {
            let na = a.norm();
            let nb = b.norm();
            if na == 0.0 && nb == 0.0 {
                return 0.0;
            }
            if na == 0.0 || nb == 0.0 {
                return 1.0;
            }
            (1.0 - a.dot(b) / (na * nb)).max(0.0)
        }
        DistanceMetric::ChiSquare => {
            let mut s = 0.0;
            for k in 0..a.len() {
                let d = a[k] - b[k];
                s += d * d / (a[k] + b[k] + CHI_SQUARE_EPS);
            }
            s
        }
    }
}
