//! Cross-modal matching with a pairwise constraint.
//!
//! Two projections `U_A` (d_A x c) and `U_B` (d_B x c) map both modalities
//! into the shared class-indicator space. The objective combines a
//! least-squares label-regression term per modality, a graph-weighted
//! structure-preserving term, and an l21 penalty on the projected pair
//! residuals that lets corrupted pairs drop out instead of dominating:
//!
//! ```text
//! min  sum_I ||X_I^T U_I - Y||_F^2
//!      + lambda1 * sum_I sum_{i<j} w_ij ||U_I^T (x_i - x_j)||_2
//!      + lambda2 * ||X_A^T U_A - X_B^T U_B||_21
//! ```
//!
//! The problem is jointly convex but the l21 terms are nonsmooth, so it is
//! solved by iterative reweighting (half-quadratic minimization): auxiliary
//! weights `p_ij = 1 / max(||U_I^T (x_i - x_j)||, eps)` and
//! `q_i = 1 / max(||U_A^T x_i^A - U_B^T x_i^B||, eps)` turn each step into
//! two coupled ridge systems,
//!
//! ```text
//! U_A = [X_A (I + lambda1 L_A + lambda2 Q) X_A^T] \ (X_A Yhat_A)
//! U_B = [X_B (I + lambda1 L_B + lambda2 Q) X_B^T] \ (X_B Yhat_B)
//! ```
//!
//! with `L_I = D^I - W^I`, `W^I_ij = w_ij p^I_ij`, `Q = diag(q)`,
//! `Yhat_A = Y + lambda2 Q X_B^T U_B` (and symmetrically, using the fresh
//! `U_A`, for `Yhat_B`). Each weight refresh and each solve decreases the
//! smoothed surrogate objective, and the fixed point satisfies the
//! stationarity conditions of the convex problem, so the iteration reaches
//! the global optimum from any start.
//!
//! Scaling convention: pairing the weight `1/max(t0, eps)` with a plain
//! quadratic penalty majorizes `2 h_eps(t)` (where `h_eps` is the smoothed
//! absolute value), so the objective the iteration actually descends carries
//! the nonsmooth penalties with coefficient `2 lambda`. [`smoothed_objective`]
//! reports that descent objective; [`cmmp_objective`] reports the nominal
//! single-counted value used by definition oracles. The two differ only by
//! this fixed rescaling of the penalty terms.

use nalgebra::DVector;

use crate::csc::{affinity_from_representation, csc_fit, CscParams};
use crate::dataset::PairedDataset;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, solve_linear, Mat, SYMMETRY_TOLERANCE};

/// Relative ridge applied to the normal matrix when the feature dimension
/// reaches the sample count and the Gram-style system is structurally
/// rank-deficient. Scaled by the mean diagonal magnitude because the
/// reweighting floor can inflate the system norm by orders of magnitude.
const DEGENERATE_RIDGE: f64 = 1e-10;

/// Builds the n x c class-indicator matrix: `Y[i][l-1] = 1` iff sample `i`
/// carries label `l`.
pub fn indicator_matrix(labels: &[usize], c: usize) -> Result<Mat> {
    if labels.is_empty() || c == 0 {
        return Err(Error::ShapeError("labels and class count must be nonempty".into()));
    }
    let mut y = Mat::zeros(labels.len(), c);
    let mut seen = vec![false; c];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l > c {
            return Err(Error::LabelError { label: l, c });
        }
        y[(i, l - 1)] = 1.0;
        seen[l - 1] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::LabelError { label: missing + 1, c });
    }
    Ok(y)
}

/// Symmetric nonnegative edge weights with a zero diagonal.
#[derive(Clone, Debug)]
pub struct SemanticGraph {
    weights: Mat,
}

impl SemanticGraph {
    /// Validates symmetry and nonnegativity; the diagonal is forced to zero.
    pub fn new(mut weights: Mat) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::ShapeError(format!(
                "graph must be square, got {}x{}",
                n,
                weights.ncols()
            )));
        }
        let mut dev = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                dev = dev.max((weights[(i, j)] - weights[(j, i)]).abs());
            }
        }
        if dev > SYMMETRY_TOLERANCE {
            return Err(Error::AsymmetricInput { max_dev: dev });
        }
        if weights.iter().any(|&v| v < 0.0) {
            return Err(Error::ShapeError("graph weights must be nonnegative".into()));
        }
        for i in 0..n {
            weights[(i, i)] = 0.0;
        }
        Ok(Self { weights })
    }

    /// Supervised override: unit weight between samples of the same class.
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let weights = Mat::from_fn(n, n, |i, j| {
            if i != j && labels[i] == labels[j] {
                1.0
            } else {
                0.0
            }
        });
        Self { weights }
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }
}

/// Unsupervised semantic graph: consensus self-representation of the
/// training modalities turned into an affinity.
pub fn semantic_graph_weights(ds: &PairedDataset, csc_params: &CscParams) -> Result<SemanticGraph> {
    let state = csc_fit(ds, csc_params)?;
    SemanticGraph::new(affinity_from_representation(&state.consensus))
}

/// Penalty applied to the projected pair residuals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPenalty {
    /// Row-wise l21 norm; outlying pairs contribute linearly.
    L21,
    /// Squared Frobenius norm; every pair contributes quadratically.
    Squared,
}

/// Starting point of the iteration. The problem is jointly convex, so the
/// optimum is initialization-independent; the choice only affects cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Decoupled least-squares regression of the indicator matrix.
    LeastSquares,
    /// All-zero projections.
    Zeros,
}

/// Where the structure graph comes from.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    /// Consensus subspace-clustering affinity of the training modalities.
    Csc(CscParams),
    /// Unit weights between same-label pairs.
    SameLabel,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CmmpParams {
    /// Structure-preservation weight.
    pub lambda1: f64,
    /// Pairwise-constraint weight.
    pub lambda2: f64,
    /// Reweighting floor: weights are `1/max(norm, epsilon)`.
    pub epsilon: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Relative change threshold on the smoothed objective.
    pub tol: f64,
    pub pair_penalty: PairPenalty,
    pub init: InitStrategy,
    pub graph: GraphSource,
}

impl Default for CmmpParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            epsilon: 1e-8,
            max_iters: 100,
            tol: 1e-7,
            pair_penalty: PairPenalty::L21,
            init: InitStrategy::LeastSquares,
            graph: GraphSource::Csc(CscParams::default()),
        }
    }
}

impl CmmpParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(Error::InvalidConfig("lambda1 and lambda2 must be nonnegative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// The learned pair of projections into the shared label space.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionPair {
    pub u_a: Mat,
    pub u_b: Mat,
}

/// Half-quadratic auxiliary state for the current projections: per-edge
/// weights `p^I` (stored densely, zero off the graph support), pair weights
/// `q`, and the induced Laplacians `L_I = D^I - W^I`.
#[derive(Clone, Debug)]
pub struct HqState {
    pub p: [Mat; 2],
    pub q: DVector<f64>,
    pub laplacians: [Mat; 2],
}

impl HqState {
    pub fn compute(
        u_a: &Mat,
        u_b: &Mat,
        x_a: &Mat,
        x_b: &Mat,
        graph: &SemanticGraph,
        params: &CmmpParams,
    ) -> Self {
        let p_a = hq_update_p(u_a, x_a, graph, params.epsilon);
        let p_b = hq_update_p(u_b, x_b, graph, params.epsilon);
        let q = match params.pair_penalty {
            PairPenalty::L21 => hq_update_q(u_a, u_b, x_a, x_b, params.epsilon),
            PairPenalty::Squared => DVector::from_element(x_a.ncols(), 1.0),
        };
        let lap_a = weighted_laplacian(graph, &p_a);
        let lap_b = weighted_laplacian(graph, &p_b);
        Self { p: [p_a, p_b], q, laplacians: [lap_a, lap_b] }
    }
}

/// Edge reweighting: `p_ij = 1 / max(||U^T (x_i - x_j)||, eps)` on every
/// edge with `w_ij > 0`, zero elsewhere.
pub fn hq_update_p(u: &Mat, x: &Mat, graph: &SemanticGraph, epsilon: f64) -> Mat {
    let n = x.ncols();
    let projected = u.transpose() * x;
    let w = graph.weights();
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if w[(i, j)] > 0.0 {
                let gap = (projected.column(i) - projected.column(j)).norm();
                let weight = 1.0 / gap.max(epsilon);
                p[(i, j)] = weight;
                p[(j, i)] = weight;
            }
        }
    }
    p
}

/// Pair reweighting: `q_i = 1 / max(||U_A^T x_i^A - U_B^T x_i^B||, eps)`.
pub fn hq_update_q(u_a: &Mat, u_b: &Mat, x_a: &Mat, x_b: &Mat, epsilon: f64) -> DVector<f64> {
    let pa = u_a.transpose() * x_a;
    let pb = u_b.transpose() * x_b;
    DVector::from_fn(x_a.ncols(), |i, _| {
        let gap = (pa.column(i) - pb.column(i)).norm();
        1.0 / gap.max(epsilon)
    })
}

/// `L = D - W.p` where `W.p_ij = w_ij * p_ij` and `D` holds its row sums.
/// Rows sum to zero and the matrix is symmetric positive semidefinite.
fn weighted_laplacian(graph: &SemanticGraph, p: &Mat) -> Mat {
    let w = graph.weights();
    let n = w.nrows();
    let mut lap = Mat::zeros(n, n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if i != j {
                let edge = w[(i, j)] * p[(i, j)];
                lap[(i, j)] = -edge;
                degree += edge;
            }
        }
        lap[(i, i)] = degree;
    }
    lap
}

fn row_scaled(m: &Mat, scale: &DVector<f64>) -> Mat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * scale[i])
}

/// Solves one side's ridge system `X (I + l1 L + l2 Q) X^T U = X Yhat`.
/// Returns the solution and whether the degenerate-dimension ridge fired.
fn solve_projection(
    x: &Mat,
    lap: &Mat,
    q: &DVector<f64>,
    yhat: &Mat,
    lambda1: f64,
    lambda2: f64,
) -> Result<(Mat, bool)> {
    let n = x.ncols();
    let d = x.nrows();
    let mut k = lap * lambda1;
    for i in 0..n {
        k[(i, i)] += 1.0 + lambda2 * q[i];
    }
    let mut m = x * (k * x.transpose());
    let mut ridged = false;
    if d >= n {
        // X(..)X^T has rank at most n; regularize the null directions.
        let mean_diag = (0..d).map(|i| m[(i, i)].abs()).sum::<f64>() / d as f64;
        m += Mat::identity(d, d) * (DEGENERATE_RIDGE * mean_diag.max(1.0));
        ridged = true;
    }
    let sol = solve_linear(&m, &(x * yhat))?;
    Ok((sol, ridged))
}

/// One coupled update: solve for `U_A` holding the previous `U_B` inside
/// `Yhat_A`, then solve for `U_B` using the fresh `U_A`. Each solve is the
/// exact minimizer of the quadratic surrogate in its own block.
pub fn update_projections(
    x_a: &Mat,
    x_b: &Mat,
    y: &Mat,
    hq: &HqState,
    prev: &ProjectionPair,
    params: &CmmpParams,
) -> Result<(ProjectionPair, [bool; 2])> {
    let yhat_a = y + row_scaled(&(x_b.transpose() * &prev.u_b), &hq.q) * params.lambda2;
    let (u_a, ridge_a) =
        solve_projection(x_a, &hq.laplacians[0], &hq.q, &yhat_a, params.lambda1, params.lambda2)?;
    let yhat_b = y + row_scaled(&(x_a.transpose() * &u_a), &hq.q) * params.lambda2;
    let (u_b, ridge_b) =
        solve_projection(x_b, &hq.laplacians[1], &hq.q, &yhat_b, params.lambda1, params.lambda2)?;
    Ok((ProjectionPair { u_a, u_b }, [ridge_a, ridge_b]))
}

/// Smoothed absolute value matching the reweighting floor: identity above
/// `eps`, quadratic below.
fn h_eps(t: f64, eps: f64) -> f64 {
    if t >= eps {
        t
    } else {
        (t * t + eps * eps) / (2.0 * eps)
    }
}

/// The descent objective of the reweighted iteration: data terms plus the
/// smoothed nonsmooth penalties at the iteration's own scaling (coefficient
/// `2 lambda1` on the unordered graph sum, `2 lambda2` on the l21 pair sum;
/// the squared pair variant keeps `lambda2`). Non-increasing across
/// iterations of [`cmmp_fit`].
pub fn smoothed_objective(
    u_a: &Mat,
    u_b: &Mat,
    x_a: &Mat,
    x_b: &Mat,
    y: &Mat,
    graph: &SemanticGraph,
    params: &CmmpParams,
) -> f64 {
    let eps = params.epsilon;
    let pa = u_a.transpose() * x_a;
    let pb = u_b.transpose() * x_b;
    let n = x_a.ncols();
    let w = graph.weights();

    let mut value = frobenius_norm(&(x_a.transpose() * u_a - y)).powi(2)
        + frobenius_norm(&(x_b.transpose() * u_b - y)).powi(2);

    let mut graph_term = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if w[(i, j)] > 0.0 {
                let ga = (pa.column(i) - pa.column(j)).norm();
                let gb = (pb.column(i) - pb.column(j)).norm();
                graph_term += w[(i, j)] * (h_eps(ga, eps) + h_eps(gb, eps));
            }
        }
    }
    value += 2.0 * params.lambda1 * graph_term;

    match params.pair_penalty {
        PairPenalty::L21 => {
            let mut pair = 0.0;
            for i in 0..n {
                pair += h_eps((pa.column(i) - pb.column(i)).norm(), eps);
            }
            value += 2.0 * params.lambda2 * pair;
        }
        PairPenalty::Squared => {
            let r = x_a.transpose() * u_a - x_b.transpose() * u_b;
            value += params.lambda2 * frobenius_norm(&r).powi(2);
        }
    }
    value
}

/// Nominal objective value: label regression plus `lambda1` times the
/// single-counted unordered graph sum plus `lambda2` times the pair
/// penalty, with no epsilon smoothing.
pub fn cmmp_objective(
    u_a: &Mat,
    u_b: &Mat,
    x_a: &Mat,
    x_b: &Mat,
    y: &Mat,
    graph: &SemanticGraph,
    params: &CmmpParams,
) -> f64 {
    let pa = u_a.transpose() * x_a;
    let pb = u_b.transpose() * x_b;
    let n = x_a.ncols();
    let w = graph.weights();

    let mut value = frobenius_norm(&(x_a.transpose() * u_a - y)).powi(2)
        + frobenius_norm(&(x_b.transpose() * u_b - y)).powi(2);

    let mut graph_term = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if w[(i, j)] > 0.0 {
                graph_term += w[(i, j)]
                    * ((pa.column(i) - pa.column(j)).norm() + (pb.column(i) - pb.column(j)).norm());
            }
        }
    }
    value += params.lambda1 * graph_term;

    let r = x_a.transpose() * u_a - x_b.transpose() * u_b;
    value += match params.pair_penalty {
        PairPenalty::L21 => params.lambda2 * crate::linalg::l21_norm(&r),
        PairPenalty::Squared => params.lambda2 * frobenius_norm(&r).powi(2),
    };
    value
}

/// Distance of `(U_A, U_B)` from the coupled fixed-point conditions:
/// weights are rebuilt from the current projections, both ridge systems are
/// re-solved with the current opposite-side projections inside `Yhat`, and
/// the larger Frobenius gap is returned. A near-zero residual certifies the
/// global optimum of the jointly convex problem.
pub fn stationarity_residual(
    u_a: &Mat,
    u_b: &Mat,
    x_a: &Mat,
    x_b: &Mat,
    y: &Mat,
    graph: &SemanticGraph,
    params: &CmmpParams,
) -> Result<f64> {
    let hq = HqState::compute(u_a, u_b, x_a, x_b, graph, params);
    let yhat_a = y + row_scaled(&(x_b.transpose() * u_b), &hq.q) * params.lambda2;
    let (sol_a, _) =
        solve_projection(x_a, &hq.laplacians[0], &hq.q, &yhat_a, params.lambda1, params.lambda2)?;
    let yhat_b = y + row_scaled(&(x_a.transpose() * u_a), &hq.q) * params.lambda2;
    let (sol_b, _) =
        solve_projection(x_b, &hq.laplacians[1], &hq.q, &yhat_b, params.lambda1, params.lambda2)?;
    Ok(frobenius_norm(&(u_a - sol_a)).max(frobenius_norm(&(u_b - sol_b))))
}

/// Applies a learned projection: returns `U^T X` (c x m).
pub fn project(u: &Mat, x: &Mat) -> Result<Mat> {
    if u.nrows() != x.nrows() {
        return Err(Error::ShapeError(format!(
            "projection expects {} feature rows, got {}",
            u.nrows(),
            x.nrows()
        )));
    }
    Ok(u.transpose() * x)
}

/// Outcome of [`cmmp_fit`].
#[derive(Clone, Debug)]
pub struct CmmpFit {
    pub projections: ProjectionPair,
    /// Smoothed descent objective at the initial point and after every
    /// iteration; non-increasing.
    pub objective_trace: Vec<f64>,
    /// Nominal objective at the final projections.
    pub exact_objective: f64,
    /// Fixed-point residual at the final projections.
    pub stationarity_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the degenerate-dimension ridge was applied per side.
    pub ridge_applied: [bool; 2],
    /// Zero-norm training columns reported by the normalization step,
    /// per modality.
    pub zero_columns: Vec<Vec<usize>>,
}

/// Trains the matcher: normalizes samples to unit norm, builds the semantic
/// graph, then alternates half-quadratic weight updates with the coupled
/// ridge solves until the smoothed objective stalls.
pub fn cmmp_fit(ds: &PairedDataset, labels: &[usize], params: &CmmpParams) -> Result<CmmpFit> {
    params.validate()?;
    if ds.n_modalities() != 2 {
        return Err(Error::ShapeError(format!(
            "matching expects exactly 2 modalities, got {}",
            ds.n_modalities()
        )));
    }
    let n = ds.n_samples();
    if labels.len() != n {
        return Err(Error::ShapeError(format!("{} labels for {} samples", labels.len(), n)));
    }
    let c = *labels.iter().max().unwrap_or(&0);
    let y = indicator_matrix(labels, c)?;

    let (normalized, zero_columns) = ds.normalize_columns();
    let x_a = normalized.modality(0).clone();
    let x_b = normalized.modality(1).clone();

    let graph = match &params.graph {
        GraphSource::Csc(csc_params) => semantic_graph_weights(&normalized, csc_params)?,
        GraphSource::SameLabel => SemanticGraph::from_labels(labels),
    };

    cmmp_fit_prepared(&x_a, &x_b, &y, &graph, params, zero_columns)
}

/// [`cmmp_fit`] on already normalized matrices with an explicit graph.
pub fn cmmp_fit_prepared(
    x_a: &Mat,
    x_b: &Mat,
    y: &Mat,
    graph: &SemanticGraph,
    params: &CmmpParams,
    zero_columns: Vec<Vec<usize>>,
) -> Result<CmmpFit> {
    params.validate()?;
    let n = x_a.ncols();
    if x_b.ncols() != n || y.nrows() != n || graph.n() != n {
        return Err(Error::ShapeError("inconsistent sample counts across inputs".into()));
    }
    let c = y.ncols();

    let mut ridge_applied = [false; 2];
    let mut current = match params.init {
        InitStrategy::Zeros => ProjectionPair {
            u_a: Mat::zeros(x_a.nrows(), c),
            u_b: Mat::zeros(x_b.nrows(), c),
        },
        InitStrategy::LeastSquares => {
            let q = DVector::from_element(n, 1.0);
            let zero_lap = Mat::zeros(n, n);
            let (u_a, ra) = solve_projection(x_a, &zero_lap, &q, y, 0.0, 0.0)?;
            let (u_b, rb) = solve_projection(x_b, &zero_lap, &q, y, 0.0, 0.0)?;
            ridge_applied = [ra, rb];
            ProjectionPair { u_a, u_b }
        }
    };

    let mut trace = vec![smoothed_objective(&current.u_a, &current.u_b, x_a, x_b, y, graph, params)];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        let hq = HqState::compute(&current.u_a, &current.u_b, x_a, x_b, graph, params);
        let (next, ridges) = update_projections(x_a, x_b, y, &hq, &current, params)?;
        ridge_applied = [ridge_applied[0] || ridges[0], ridge_applied[1] || ridges[1]];
        current = next;
        iterations += 1;

        let obj = smoothed_objective(&current.u_a, &current.u_b, x_a, x_b, y, graph, params);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if (prev - obj).abs() <= params.tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    let residual = stationarity_residual(&current.u_a, &current.u_b, x_a, x_b, y, graph, params)?;
    let exact = cmmp_objective(&current.u_a, &current.u_b, x_a, x_b, y, graph, params);
    Ok(CmmpFit {
        projections: current,
        objective_trace: trace,
        exact_objective: exact,
        stationarity_residual: residual,
        iterations,
        converged,
        ridge_applied,
        zero_columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_mat(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn toy_problem(
        rng: &mut ChaCha12Rng,
        d_a: usize,
        d_b: usize,
        n: usize,
        c: usize,
    ) -> (Mat, Mat, Mat, Vec<usize>, SemanticGraph) {
        let x_a = random_mat(rng, d_a, n);
        let x_b = random_mat(rng, d_b, n);
        let labels: Vec<usize> = (0..n).map(|i| i % c + 1).collect();
        let y = indicator_matrix(&labels, c).unwrap();
        let graph = SemanticGraph::from_labels(&labels);
        (x_a, x_b, y, labels, graph)
    }

    #[test]
    fn indicator_examples() {
        let y = indicator_matrix(&[1, 2, 1], 2).unwrap();
        assert_eq!(y, Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]));

        let ones = indicator_matrix(&[1, 1, 1], 1).unwrap();
        assert_eq!(ones, Mat::from_element(3, 1, 1.0));

        let eye = indicator_matrix(&[1, 2, 3], 3).unwrap();
        assert_eq!(eye, Mat::identity(3, 3));
    }

    #[test]
    fn indicator_rejects_bad_labels() {
        assert!(matches!(indicator_matrix(&[1, 3], 2), Err(Error::LabelError { label: 3, c: 2 })));
        assert!(matches!(indicator_matrix(&[1, 1], 2), Err(Error::LabelError { label: 2, c: 2 })));
    }

    #[test]
    fn supervised_graph_matches_labels() {
        let g = SemanticGraph::from_labels(&[1, 1, 2]);
        let expect = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.weights(), &expect);
    }

    #[test]
    fn csc_graph_on_one_cluster_is_positive() {
        // Six points in a shared 2-dimensional subspace, identical modalities.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let basis = random_mat(&mut rng, 4, 2);
        let coeff = random_mat(&mut rng, 2, 6);
        let x = basis * coeff;
        let ds = PairedDataset::new(vec![x.clone(), x], None).unwrap();
        let g = semantic_graph_weights(&ds, &CscParams { lambda1: 0.1, lambda3: 0.1, ..Default::default() })
            .unwrap();
        for i in 0..6 {
            assert_eq!(g.weights()[(i, i)], 0.0);
            for j in 0..6 {
                if i != j {
                    assert!(g.weights()[(i, j)] > 0.0, "weight ({i},{j}) not positive");
                }
                assert_eq!(g.weights()[(i, j)], g.weights()[(j, i)]);
            }
        }
    }

    #[test]
    fn hq_p_scalar_cases() {
        // 1-D: U = 1, x_i - x_j = 3 on the only edge.
        let u = Mat::from_element(1, 1, 1.0);
        let x = Mat::from_row_slice(1, 2, &[4.0, 1.0]);
        let g = SemanticGraph::from_labels(&[1, 1]);
        let p = hq_update_p(&u, &x, &g, 1e-8);
        assert_relative_eq!(p[(0, 1)], 1.0 / 3.0, epsilon = 1e-12);

        // Coincident points hit the floor.
        let x_same = Mat::from_row_slice(1, 2, &[2.0, 2.0]);
        let p = hq_update_p(&u, &x_same, &g, 1e-8);
        assert_relative_eq!(p[(0, 1)], 1e8, epsilon = 1.0);

        // Zero projection floors every edge.
        let p = hq_update_p(&Mat::zeros(1, 1), &x, &g, 1e-8);
        assert_relative_eq!(p[(0, 1)], 1e8, epsilon = 1.0);
    }

    #[test]
    fn hq_q_scalar_cases() {
        let u = Mat::from_element(1, 1, 1.0);
        let x_a = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
        let x_b = Mat::from_row_slice(1, 2, &[3.0, 1.0]);
        let q = hq_update_q(&u, &u, &x_a, &x_b, 1e-8);
        assert_relative_eq!(q[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(q[1], 1e8, epsilon = 1.0);
        assert!(q.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn hq_weights_bounded_by_floor() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let (x_a, x_b, _, _, graph) = toy_problem(&mut rng, 3, 4, 8, 2);
        let u_a = random_mat(&mut rng, 3, 2);
        let u_b = random_mat(&mut rng, 4, 2);
        let params = CmmpParams::default();
        let hq = HqState::compute(&u_a, &u_b, &x_a, &x_b, &graph, &params);
        let cap = 1.0 / params.epsilon;
        for m in &hq.p {
            for i in 0..8 {
                for j in 0..8 {
                    if graph.weights()[(i, j)] > 0.0 {
                        assert!(m[(i, j)] > 0.0 && m[(i, j)] <= cap);
                    } else {
                        assert_eq!(m[(i, j)], 0.0);
                    }
                }
            }
        }
        assert!(hq.q.iter().all(|&v| v > 0.0 && v <= cap));
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_psd() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let (x_a, x_b, _, _, graph) = toy_problem(&mut rng, 3, 3, 7, 2);
        let u = random_mat(&mut rng, 3, 2);
        let hq = HqState::compute(&u, &u, &x_a, &x_b, &graph, &CmmpParams::default());
        for lap in &hq.laplacians {
            for i in 0..7 {
                let row_sum: f64 = lap.row(i).iter().sum();
                assert!(row_sum.abs() < 1e-10);
            }
            let (vals, _) = crate::linalg::sym_eig_smallest(lap, 1).unwrap();
            assert!(vals[0] > -1e-10, "smallest eigenvalue {}", vals[0]);
        }
    }

    #[test]
    fn update_with_zero_lambdas_is_least_squares() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let (x_a, x_b, y, _, graph) = toy_problem(&mut rng, 4, 5, 9, 3);
        let params = CmmpParams { lambda1: 0.0, lambda2: 0.0, ..Default::default() };
        let prev = ProjectionPair { u_a: Mat::zeros(4, 3), u_b: Mat::zeros(5, 3) };
        let hq = HqState::compute(&prev.u_a, &prev.u_b, &x_a, &x_b, &graph, &params);
        let (pair, _) = update_projections(&x_a, &x_b, &y, &hq, &prev, &params).unwrap();
        let expect_a = solve_linear(&(&x_a * x_a.transpose()), &(&x_a * &y)).unwrap();
        let expect_b = solve_linear(&(&x_b * x_b.transpose()), &(&x_b * &y)).unwrap();
        assert!(frobenius_norm(&(&pair.u_a - expect_a)) < 1e-10);
        assert!(frobenius_norm(&(&pair.u_b - expect_b)) < 1e-10);
    }

    // The coupled solves minimize the quadratic surrogate
    //   J(U) = sum_I ||X_I^T U_I - Y||^2
    //        + l1 sum_{I,i<j} w_ij p^I_ij ||U_I^T (x_i - x_j)||^2
    //        + l2 sum_i q_i ||row_i(X_A^T U_A - X_B^T U_B)||^2
    // at fixed weights; iterated to its fixed point they must zero its
    // gradient.
    fn surrogate(
        u_a: &Mat,
        u_b: &Mat,
        x_a: &Mat,
        x_b: &Mat,
        y: &Mat,
        graph: &SemanticGraph,
        hq: &HqState,
        l1: f64,
        l2: f64,
    ) -> f64 {
        let pa = u_a.transpose() * x_a;
        let pb = u_b.transpose() * x_b;
        let n = x_a.ncols();
        let w = graph.weights();
        let mut v = frobenius_norm(&(x_a.transpose() * u_a - y)).powi(2)
            + frobenius_norm(&(x_b.transpose() * u_b - y)).powi(2);
        for i in 0..n {
            for j in (i + 1)..n {
                if w[(i, j)] > 0.0 {
                    v += l1 * w[(i, j)] * hq.p[0][(i, j)] * (pa.column(i) - pa.column(j)).norm_squared();
                    v += l1 * w[(i, j)] * hq.p[1][(i, j)] * (pb.column(i) - pb.column(j)).norm_squared();
                }
            }
        }
        for i in 0..n {
            v += l2 * hq.q[i] * (pa.column(i) - pb.column(i)).norm_squared();
        }
        v
    }

    #[test]
    fn inner_fixed_point_zeroes_surrogate_gradient() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (x_a, x_b, y, _, graph) = toy_problem(&mut rng, 3, 4, 8, 2);
        let params = CmmpParams { lambda1: 0.4, lambda2: 0.6, ..Default::default() };
        let mut pair = ProjectionPair {
            u_a: random_mat(&mut rng, 3, 2),
            u_b: random_mat(&mut rng, 4, 2),
        };
        let hq = HqState::compute(&pair.u_a, &pair.u_b, &x_a, &x_b, &graph, &params);
        // Iterate the two block solves at fixed weights to the joint
        // minimizer of the surrogate.
        for _ in 0..200 {
            let (next, _) = update_projections(&x_a, &x_b, &y, &hq, &pair, &params).unwrap();
            let delta = frobenius_norm(&(&next.u_a - &pair.u_a)) + frobenius_norm(&(&next.u_b - &pair.u_b));
            pair = next;
            if delta < 1e-14 {
                break;
            }
        }
        let h = 1e-6;
        let mut max_grad = 0.0_f64;
        for (which, rows, cols) in [(0, 3, 2), (1, 4, 2)] {
            for r in 0..rows {
                for cidx in 0..cols {
                    let mut up = pair.clone();
                    let mut dn = pair.clone();
                    if which == 0 {
                        up.u_a[(r, cidx)] += h;
                        dn.u_a[(r, cidx)] -= h;
                    } else {
                        up.u_b[(r, cidx)] += h;
                        dn.u_b[(r, cidx)] -= h;
                    }
                    let g = (surrogate(&up.u_a, &up.u_b, &x_a, &x_b, &y, &graph, &hq, 0.4, 0.6)
                        - surrogate(&dn.u_a, &dn.u_b, &x_a, &x_b, &y, &graph, &hq, 0.4, 0.6))
                        / (2.0 * h);
                    max_grad = max_grad.max(g.abs());
                }
            }
        }
        assert!(max_grad <= 1e-6, "surrogate gradient inf-norm {max_grad}");
    }

    #[test]
    fn objective_zero_projections() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let (x_a, x_b, y, _, graph) = toy_problem(&mut rng, 3, 4, 6, 2);
        let params = CmmpParams::default();
        let v = cmmp_objective(&Mat::zeros(3, 2), &Mat::zeros(4, 2), &x_a, &x_b, &y, &graph, &params);
        // One-hot rows: ||Y||_F^2 = n, both data terms contribute.
        assert_relative_eq!(v, 2.0 * 6.0, epsilon = 1e-12);
    }

    #[test]
    fn objective_matches_manual_recomputation() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (x_a, x_b, y, _, graph) = toy_problem(&mut rng, 3, 4, 6, 2);
        let u_a = random_mat(&mut rng, 3, 2);
        let u_b = random_mat(&mut rng, 4, 2);
        let params = CmmpParams { lambda1: 0.3, lambda2: 0.7, ..Default::default() };
        let got = cmmp_objective(&u_a, &u_b, &x_a, &x_b, &y, &graph, &params);

        // Independent loop-level recomputation.
        let pa = u_a.transpose() * &x_a;
        let pb = u_b.transpose() * &x_b;
        let mut expect = 0.0;
        for i in 0..6 {
            for l in 0..2 {
                expect += (pa[(l, i)] - y[(i, l)]).powi(2) + (pb[(l, i)] - y[(i, l)]).powi(2);
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                if j > i && graph.weights()[(i, j)] > 0.0 {
                    let da: f64 = (0..2).map(|l| (pa[(l, i)] - pa[(l, j)]).powi(2)).sum::<f64>().sqrt();
                    let db: f64 = (0..2).map(|l| (pb[(l, i)] - pb[(l, j)]).powi(2)).sum::<f64>().sqrt();
                    expect += 0.3 * graph.weights()[(i, j)] * (da + db);
                }
            }
        }
        for i in 0..6 {
            let row: f64 = (0..2).map(|l| (pa[(l, i)] - pb[(l, i)]).powi(2)).sum::<f64>().sqrt();
            expect += 0.7 * row;
        }
        assert_relative_eq!(got, expect, epsilon = 1e-10);
    }

    #[test]
    fn objective_reduces_to_regression_without_penalties() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (x_a, x_b, y, _, graph) = toy_problem(&mut rng, 3, 4, 6, 2);
        let u_a = random_mat(&mut rng, 3, 2);
        let u_b = random_mat(&mut rng, 4, 2);
        let params = CmmpParams { lambda1: 0.0, lambda2: 0.0, ..Default::default() };
        let got = cmmp_objective(&u_a, &u_b, &x_a, &x_b, &y, &graph, &params);
        let expect = frobenius_norm(&(x_a.transpose() * &u_a - &y)).powi(2)
            + frobenius_norm(&(x_b.transpose() * &u_b - &y)).powi(2);
        assert_relative_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn stationarity_exact_for_decoupled_least_squares() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let (x_a, x_b, y, _, graph) = toy_problem(&mut rng, 4, 5, 9, 3);
        let params = CmmpParams { lambda1: 0.0, lambda2: 0.0, ..Default::default() };
        let u_a = solve_linear(&(&x_a * x_a.transpose()), &(&x_a * &y)).unwrap();
        let u_b = solve_linear(&(&x_b * x_b.transpose()), &(&x_b * &y)).unwrap();
        let r = stationarity_residual(&u_a, &u_b, &x_a, &x_b, &y, &graph, &params).unwrap();
        assert!(r <= 1e-8, "residual {r}");
    }

    #[test]
    fn project_examples() {
        let x = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(project(&Mat::identity(2, 2), &x).unwrap(), x);
        assert_eq!(project(&Mat::zeros(2, 2), &x).unwrap(), Mat::zeros(2, 3));
        assert!(matches!(project(&Mat::zeros(3, 2), &x), Err(Error::ShapeError(_))));
    }

    #[test]
    fn fit_trace_non_increasing_and_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let (x_a, x_b, _, labels, _) = toy_problem(&mut rng, 4, 6, 12, 3);
        let ds = PairedDataset::new(vec![x_a, x_b], Some(labels.clone())).unwrap();
        let params = CmmpParams {
            lambda1: 0.5,
            lambda2: 0.5,
            graph: GraphSource::SameLabel,
            ..Default::default()
        };
        let fit1 = cmmp_fit(&ds, &labels, &params).unwrap();
        for w in fit1.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs(), "trace rose: {} -> {}", w[0], w[1]);
        }
        let fit2 = cmmp_fit(&ds, &labels, &params).unwrap();
        assert_eq!(fit1.projections, fit2.projections);
    }

    #[test]
    fn identical_modalities_align_under_strong_pairing() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let x = random_mat(&mut rng, 5, 10);
        let labels: Vec<usize> = (0..10).map(|i| i % 2 + 1).collect();
        let ds = PairedDataset::new(vec![x.clone(), x], Some(labels.clone())).unwrap();
        let params = CmmpParams {
            lambda1: 0.1,
            lambda2: 50.0,
            tol: 1e-13,
            max_iters: 300,
            graph: GraphSource::SameLabel,
            ..Default::default()
        };
        let fit = cmmp_fit(&ds, &labels, &params).unwrap();
        let (normalized, _) = ds.normalize_columns();
        let r = normalized.modality(0).transpose() * &fit.projections.u_a
            - normalized.modality(1).transpose() * &fit.projections.u_b;
        assert!(frobenius_norm(&r) < 1e-6, "pair residual {}", frobenius_norm(&r));
    }

    #[test]
    fn label_permutation_permutes_projection_columns() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let (x_a, x_b, _, labels, _) = toy_problem(&mut rng, 4, 5, 9, 3);
        let ds = PairedDataset::new(vec![x_a, x_b], Some(labels.clone())).unwrap();
        let params = CmmpParams {
            lambda1: 0.4,
            lambda2: 0.8,
            graph: GraphSource::SameLabel,
            max_iters: 40,
            ..Default::default()
        };
        let base = cmmp_fit(&ds, &labels, &params).unwrap();

        // Relabel classes through the cycle 1 -> 2 -> 3 -> 1.
        let perm = [2usize, 3, 1];
        let permuted: Vec<usize> = labels.iter().map(|&l| perm[l - 1]).collect();
        let shuffled = cmmp_fit(&ds, &permuted, &params).unwrap();
        for (orig_col, &new_label) in perm.iter().enumerate() {
            let diff_a = base.projections.u_a.column(orig_col)
                - shuffled.projections.u_a.column(new_label - 1);
            let diff_b = base.projections.u_b.column(orig_col)
                - shuffled.projections.u_b.column(new_label - 1);
            assert!(diff_a.norm() < 1e-9 && diff_b.norm() < 1e-9);
        }
    }

    #[test]
    fn fixed_point_is_stable_under_resolve() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let (x_a, x_b, _, labels, _) = toy_problem(&mut rng, 3, 4, 10, 2);
        let ds = PairedDataset::new(vec![x_a, x_b], Some(labels.clone())).unwrap();
        // Run to a machine-precision fixed point so the resolve is a no-op.
        // The floor is raised slightly: near the l21 kink the reweighting
        // map contracts slowly, while in the smooth regime it snaps to the
        // fixed point.
        let params = CmmpParams {
            lambda1: 0.5,
            lambda2: 0.5,
            epsilon: 1e-6,
            tol: 0.0,
            max_iters: 800,
            graph: GraphSource::SameLabel,
            ..Default::default()
        };
        let fit = cmmp_fit(&ds, &labels, &params).unwrap();
        let (normalized, _) = ds.normalize_columns();
        let y = indicator_matrix(&labels, 2).unwrap();
        let graph = SemanticGraph::from_labels(&labels);
        let hq = HqState::compute(
            &fit.projections.u_a,
            &fit.projections.u_b,
            normalized.modality(0),
            normalized.modality(1),
            &graph,
            &params,
        );
        let (resolved, _) = update_projections(
            normalized.modality(0),
            normalized.modality(1),
            &y,
            &hq,
            &fit.projections,
            &params,
        )
        .unwrap();
        assert!(frobenius_norm(&(&resolved.u_a - &fit.projections.u_a)) < 1e-8);
        assert!(frobenius_norm(&(&resolved.u_b - &fit.projections.u_b)) < 1e-8);
    }

    #[test]
    fn ridge_fires_when_features_exceed_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let x_a = random_mat(&mut rng, 12, 6);
        let x_b = random_mat(&mut rng, 4, 6);
        let labels = vec![1, 2, 1, 2, 1, 2];
        let ds = PairedDataset::new(vec![x_a, x_b], Some(labels.clone())).unwrap();
        let params = CmmpParams {
            lambda1: 0.2,
            lambda2: 0.2,
            graph: GraphSource::SameLabel,
            ..Default::default()
        };
        let fit = cmmp_fit(&ds, &labels, &params).unwrap();
        assert!(fit.ridge_applied[0]);
        assert!(!fit.ridge_applied[1]);
    }
}
