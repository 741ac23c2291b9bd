//! Evaluation stack: clustering metrics (Hungarian-matched accuracy, NMI),
//! retrieval metrics (11-point interpolated MAP, KNN recognition rate), and
//! the cross-modal retrieval harness.
//!
//! All metric functions are pure. Per-query work parallelizes; aggregation
//! always sums in index order so results do not depend on scheduling.

use serde::{Deserialize, Serialize};

use crate::cmmp::{project, ProjectionPair};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, ExecMode};
use crate::linalg::{pairwise_distances_with, DistanceMetric, Mat};

/// Which modality the queries come from; the gallery is the other side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySide {
    A,
    B,
}

/// One query's full gallery ordering, best match first, with the same-class
/// relevance flag per rank position.
#[derive(Clone, Debug)]
pub struct RetrievalRanking {
    pub query_index: usize,
    /// Permutation of the gallery index set.
    pub ranked_gallery_indices: Vec<usize>,
    pub relevance: Vec<bool>,
}

/// Metric bundle serialized as the report's JSON payload. Fields that do
/// not apply to a run stay `null`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub nmi: Option<f64>,
    pub map: Option<f64>,
    pub recognition_rate: Option<f64>,
    pub per_query_ap: Option<Vec<Option<f64>>>,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn empty(config: serde_json::Value) -> Self {
        Self { accuracy: None, nmi: None, map: None, recognition_rate: None, per_query_ap: None, config }
    }
}

fn check_same_length(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeError(format!(
            "label vectors differ in length: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::ShapeError("cannot score empty labelings".into()));
    }
    Ok(())
}

/// Compacts arbitrary label values to 0-based ids.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let ids = labels.iter().map(|l| distinct.binary_search(l).unwrap()).collect();
    (ids, distinct.len())
}

/// Fraction of samples correctly grouped under the best cluster-to-class
/// assignment (maximum-weight bipartite matching on the confusion matrix).
/// Invariant under relabeling either argument.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_same_length(pred, truth)?;
    let n = pred.len();
    let (p, cp) = compact(pred);
    let (t, ct) = compact(truth);
    let k = cp.max(ct);
    let mut counts = vec![vec![0.0_f64; k]; k];
    for i in 0..n {
        counts[p[i]][t[i]] += 1.0;
    }
    // Hungarian minimizes; negate to maximize matched counts.
    let cost: Vec<Vec<f64>> = counts.iter().map(|row| row.iter().map(|&v| -v).collect()).collect();
    let (min_cost, _) = hungarian_min_cost(&cost);
    Ok(-min_cost / n as f64)
}

/// Minimum-cost perfect assignment on a square cost matrix via the
/// potentials / shortest-augmenting-path method. Returns the total cost and
/// the column assigned to each row.
fn hungarian_min_cost(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; m + 1];
    let mut matched = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=m {
        if matched[j] > 0 {
            assignment[matched[j] - 1] = j - 1;
            total += cost[matched[j] - 1][j - 1];
        }
    }
    (total, assignment)
}

/// Normalized mutual information of two partitions, normalized by the
/// geometric mean of the entropies. Conventions: `0 log 0 = 0`; if either
/// entropy is zero the score is 1 when the partitions are identical as set
/// partitions and 0 otherwise.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_same_length(pred, truth)?;
    let n = pred.len() as f64;
    let (p, cp) = compact(pred);
    let (t, ct) = compact(truth);
    let mut joint = vec![vec![0.0_f64; ct]; cp];
    let mut pc = vec![0.0_f64; cp];
    let mut tc = vec![0.0_f64; ct];
    for i in 0..pred.len() {
        joint[p[i]][t[i]] += 1.0;
        pc[p[i]] += 1.0;
        tc[t[i]] += 1.0;
    }
    let entropy = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| {
                let q = c / n;
                -q * q.ln()
            })
            .sum()
    };
    let h_p = entropy(&pc);
    let h_t = entropy(&tc);
    if h_p == 0.0 || h_t == 0.0 {
        let identical = (0..pred.len())
            .all(|i| (0..pred.len()).all(|j| (p[i] == p[j]) == (t[i] == t[j])));
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (a, row) in joint.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c > 0.0 {
                mi += (c / n) * ((n * c) / (pc[a] * tc[b])).ln();
            }
        }
    }
    Ok((mi / (h_p * h_t).sqrt()).clamp(0.0, 1.0))
}

/// 11-point interpolated average precision of a relevance sequence in rank
/// order: mean over recall levels {0, 0.1, ..., 1.0} of the best precision
/// among cutoffs reaching that recall.
pub fn average_precision_11pt(relevance: &[bool]) -> Result<f64> {
    let total_relevant = relevance.iter().filter(|&&r| r).count();
    if total_relevant == 0 {
        return Err(Error::UndefinedAP);
    }
    let mut points = Vec::with_capacity(relevance.len());
    let mut hits = 0usize;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
        }
        points.push((hits as f64 / (k + 1) as f64, hits as f64 / total_relevant as f64));
    }
    let mut sum = 0.0;
    for level in 0..=10 {
        let r = level as f64 / 10.0;
        let best = points
            .iter()
            .filter(|&&(_, recall)| recall >= r - 1e-12)
            .map(|&(precision, _)| precision)
            .fold(0.0_f64, f64::max);
        sum += best;
    }
    Ok(sum / 11.0)
}

/// Mean 11-point AP over scorable queries.
#[derive(Clone, Debug)]
pub struct MapScore {
    pub map: f64,
    /// AP per input query; `None` marks queries with no relevant gallery
    /// item (excluded from the mean, not scored as zero).
    pub per_query_ap: Vec<Option<f64>>,
    pub skipped_queries: Vec<usize>,
}

pub fn mean_average_precision(rankings: &[RetrievalRanking]) -> Result<MapScore> {
    let mut per_query = Vec::with_capacity(rankings.len());
    let mut skipped = Vec::new();
    let mut sum = 0.0;
    let mut scored = 0usize;
    for (idx, ranking) in rankings.iter().enumerate() {
        match average_precision_11pt(&ranking.relevance) {
            Ok(ap) => {
                per_query.push(Some(ap));
                sum += ap;
                scored += 1;
            }
            Err(Error::UndefinedAP) => {
                per_query.push(None);
                skipped.push(idx);
            }
            Err(other) => return Err(other),
        }
    }
    if scored == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(MapScore { map: sum / scored as f64, per_query_ap: per_query, skipped_queries: skipped })
}

/// Fraction of queries whose majority label among the K nearest gallery
/// embeddings matches the query label. Majority ties break toward the
/// smaller class id, distance ties toward the smaller gallery index.
pub fn knn_recognition_rate(
    gallery: &Mat,
    gallery_labels: &[usize],
    queries: &Mat,
    query_labels: &[usize],
    k: usize,
    metric: DistanceMetric,
) -> Result<f64> {
    knn_recognition_rate_with(gallery, gallery_labels, queries, query_labels, k, metric, ExecMode::default())
}

pub fn knn_recognition_rate_with(
    gallery: &Mat,
    gallery_labels: &[usize],
    queries: &Mat,
    query_labels: &[usize],
    k: usize,
    metric: DistanceMetric,
    mode: ExecMode,
) -> Result<f64> {
    let g = gallery.ncols();
    if k == 0 || k > g {
        return Err(Error::InvalidK { k, gallery: g });
    }
    if gallery_labels.len() != g || query_labels.len() != queries.ncols() {
        return Err(Error::ShapeError("label count does not match embedding count".into()));
    }
    let dist = pairwise_distances_with(queries, gallery, metric, mode)?;
    let n_queries = queries.ncols();
    let votes = map_indexed(mode, n_queries, |qi| {
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| dist[(qi, a)].total_cmp(&dist[(qi, b)]).then(a.cmp(&b)));
        let max_label = *gallery_labels.iter().max().unwrap();
        let mut counts = vec![0usize; max_label + 1];
        for &gi in order.iter().take(k) {
            counts[gallery_labels[gi]] += 1;
        }
        let mut winner = 0usize;
        let mut best = 0usize;
        for (label, &count) in counts.iter().enumerate() {
            if count > best {
                best = count;
                winner = label;
            }
        }
        winner
    });
    let correct = votes
        .iter()
        .zip(query_labels)
        .filter(|(&vote, &truth)| vote == truth)
        .count();
    Ok(correct as f64 / n_queries as f64)
}

/// Projects queries and gallery through the learned pair and ranks the
/// whole gallery per query by ascending distance, tie-broken by gallery
/// index. `side` names the modality the queries come from.
pub fn cross_modal_retrieve(
    proj: &ProjectionPair,
    query_x: &Mat,
    query_labels: &[usize],
    gallery_x: &Mat,
    gallery_labels: &[usize],
    side: QuerySide,
    metric: DistanceMetric,
) -> Result<Vec<RetrievalRanking>> {
    cross_modal_retrieve_with(
        proj,
        query_x,
        query_labels,
        gallery_x,
        gallery_labels,
        side,
        metric,
        ExecMode::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn cross_modal_retrieve_with(
    proj: &ProjectionPair,
    query_x: &Mat,
    query_labels: &[usize],
    gallery_x: &Mat,
    gallery_labels: &[usize],
    side: QuerySide,
    metric: DistanceMetric,
    mode: ExecMode,
) -> Result<Vec<RetrievalRanking>> {
    if query_labels.len() != query_x.ncols() || gallery_labels.len() != gallery_x.ncols() {
        return Err(Error::ShapeError("label count does not match sample count".into()));
    }
    let (query_emb, gallery_emb) = match side {
        QuerySide::A => (project(&proj.u_a, query_x)?, project(&proj.u_b, gallery_x)?),
        QuerySide::B => (project(&proj.u_b, query_x)?, project(&proj.u_a, gallery_x)?),
    };
    let dist = pairwise_distances_with(&query_emb, &gallery_emb, metric, mode)?;
    let g = gallery_x.ncols();
    Ok(map_indexed(mode, query_x.ncols(), |qi| {
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| dist[(qi, a)].total_cmp(&dist[(qi, b)]).then(a.cmp(&b)));
        let relevance = order.iter().map(|&gi| gallery_labels[gi] == query_labels[qi]).collect();
        RetrievalRanking { query_index: qi, ranked_gallery_indices: order, relevance }
    }))
}
