//! Class-controlled feature homophily (CFH), its generalized form, class
//! homophily, and the two-class feature distance.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;
use crate::matrix::{l2_distance, Matrix};
use crate::par_map;
use crate::rng::{stream, substream};

/// Largest node count for which exact O(n²k) baselines are computed
/// without an explicit opt-in to sampling.
pub const EXACT_BASELINE_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum BaselineMode {
    /// Average over all other nodes.
    Exact,
    /// Average over `m` other nodes drawn uniformly without replacement.
    Sampled { m: usize, seed: u64 },
}

impl BaselineMode {
    pub fn is_estimate(&self) -> bool {
        matches!(self, BaselineMode::Sampled { .. })
    }
}

/// Per-class sample means of the rows of `x`. Errors if a class has no
/// nodes.
pub fn class_means(x: &Matrix, labels: &[usize], classes: usize) -> Result<Vec<Vec<f64>>> {
    let k = x.cols();
    let mut sums = vec![vec![0.0; k]; classes];
    let mut counts = vec![0usize; classes];
    for (row, &y) in x.iter_rows().zip(labels) {
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty));
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    Ok(sums)
}

/// Subtracts `means[Y_i]` from each row.
pub fn center_by_class(x: &Matrix, labels: &[usize], means: &[Vec<f64>]) -> Matrix {
    let mut out = x.clone();
    for (i, &y) in labels.iter().enumerate() {
        for (v, m) in out.row_mut(i).iter_mut().zip(&means[y]) {
            *v -= m;
        }
    }
    out
}

/// `X | Y`: every row minus the sample mean of its class.
pub fn class_controlled_features(x: &Matrix, labels: &[usize], classes: usize) -> Result<Matrix> {
    let means = class_means(x, labels, classes)?;
    Ok(center_by_class(x, labels, &means))
}

/// Mean L2 distance from row `i` to the rows in `set`.
pub fn mean_distance(i: usize, set: &[usize], xc: &Matrix) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("distance to an empty node set".into()));
    }
    let xi = xc.row(i);
    let total: f64 = set.iter().map(|&j| l2_distance(xi, xc.row(j))).sum();
    Ok(total / set.len() as f64)
}

/// Pair-level CFH: `b(v_i) - ‖Xc_i - Xc_j‖`.
pub fn pair_cfh(i: usize, j: usize, xc: &Matrix, baseline_i: f64) -> f64 {
    baseline_i - l2_distance(xc.row(i), xc.row(j))
}

/// Homophily baselines `b(v_i)` for every row of `m`.
pub fn baseline_estimate(m: &Matrix, mode: BaselineMode) -> Result<Vec<f64>> {
    let n = m.rows();
    match mode {
        BaselineMode::Exact if n < 2 => Ok(vec![0.0; n]),
        BaselineMode::Exact if m.cols() == 1 => Ok(baselines_sorted_1d(m.as_slice())),
        BaselineMode::Exact => Ok(par_map(n, |i| {
            let xi = m.row(i);
            let total: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| l2_distance(xi, m.row(j)))
                .sum();
            total / (n - 1) as f64
        })),
        BaselineMode::Sampled { m: size, seed } => {
            if size < 2 {
                return Err(Error::InvalidParameter(format!(
                    "sampled baseline needs m >= 2, got {size}"
                )));
            }
            if n < 2 || size > n - 1 {
                return Err(Error::InvalidParameter(format!(
                    "sampled baseline size {size} exceeds n - 1 = {}",
                    n.saturating_sub(1)
                )));
            }
            Ok(par_map(n, |i| {
                let mut rng = substream(seed, stream::NODE_BASE + i as u64);
                let xi = m.row(i);
                let total: f64 = index::sample(&mut rng, n - 1, size)
                    .into_iter()
                    .map(|t| if t >= i { t + 1 } else { t })
                    .map(|j| l2_distance(xi, m.row(j)))
                    .sum();
                total / size as f64
            }))
        }
    }
}

/// O(n log n) exact baselines for one-dimensional values via prefix sums
/// over the sorted order.
fn baselines_sorted_1d(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &i in &order {
        prefix.push(prefix.last().unwrap() + values[i]);
    }
    let total = prefix[n];
    let mut out = vec![0.0; n];
    for (p, &i) in order.iter().enumerate() {
        let x = values[i];
        let below = x * p as f64 - prefix[p];
        let above = (total - prefix[p + 1]) - x * (n - 1 - p) as f64;
        out[i] = (below + above) / (n - 1) as f64;
    }
    out
}

/// Per-node and graph-level homophily scores.
///
/// Isolated nodes carry zeros in the per-node vectors and are listed in
/// `skipped_isolated`; they take no part in the graph-level sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfhReport {
    pub baseline: Vec<f64>,
    pub neighbor_distance: Vec<f64>,
    pub node_cfh_raw: Vec<f64>,
    pub node_cfh: Vec<f64>,
    pub graph_cfh_raw: f64,
    pub graph_cfh: f64,
    pub skipped_isolated: Vec<usize>,
    pub baseline_mode: BaselineMode,
}

/// `1 - d/b` when the neighbors are closer than the baseline, `b/d - 1`
/// otherwise; zero when the baseline vanishes.
pub fn normalized_cfh(baseline: f64, neighbor_distance: f64) -> f64 {
    if baseline == 0.0 {
        return 0.0;
    }
    (baseline - neighbor_distance) / baseline.max(neighbor_distance)
}

/// CFH of `g`, measured on its class-controlled features.
pub fn cfh_report(g: &LabeledGraph, mode: BaselineMode) -> Result<CfhReport> {
    let xc = class_controlled_features(g.features(), g.labels(), g.c())?;
    generalized_homophily(g, &xc, mode)
}

/// The CFH pipeline applied to an arbitrary per-node matrix `m` with no
/// class control.
pub fn generalized_homophily(g: &LabeledGraph, m: &Matrix, mode: BaselineMode) -> Result<CfhReport> {
    if m.rows() != g.n() {
        return Err(Error::InvalidParameter(format!(
            "matrix has {} rows for {} nodes",
            m.rows(),
            g.n()
        )));
    }
    if !m.all_finite() {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let baseline = baseline_estimate(m, mode)?;
    report_from_baselines(g, m, baseline, mode)
}

pub(crate) fn report_from_baselines(
    g: &LabeledGraph,
    m: &Matrix,
    baseline: Vec<f64>,
    mode: BaselineMode,
) -> Result<CfhReport> {
    let n = g.n();
    let mut neighbor_distance = vec![0.0; n];
    let mut node_cfh_raw = vec![0.0; n];
    let mut node_cfh = vec![0.0; n];
    let mut skipped_isolated = Vec::new();
    let (mut sum_b, mut sum_d, mut counted) = (0.0, 0.0, 0usize);
    for i in 0..n {
        let nbrs = g.neighbors(i);
        if nbrs.is_empty() {
            skipped_isolated.push(i);
            continue;
        }
        let d = mean_distance(i, nbrs, m)?;
        let b = baseline[i];
        neighbor_distance[i] = d;
        node_cfh_raw[i] = b - d;
        node_cfh[i] = normalized_cfh(b, d);
        sum_b += b;
        sum_d += d;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::NoEdges);
    }
    let graph_cfh_raw = (sum_b - sum_d) / counted as f64;
    let graph_cfh = normalized_cfh(sum_b, sum_d);
    Ok(CfhReport {
        baseline,
        neighbor_distance,
        node_cfh_raw,
        node_cfh,
        graph_cfh_raw,
        graph_cfh,
        skipped_isolated,
        baseline_mode: mode,
    })
}

/// The n×c node class matrix.
pub fn one_hot_labels(g: &LabeledGraph) -> Matrix {
    let mut m = Matrix::zeros(g.n(), g.c());
    for (i, &y) in g.labels().iter().enumerate() {
        m.row_mut(i)[y] = 1.0;
    }
    m
}

/// Class homophily: per class, the same-class share of its nodes' edges
/// above the class prior, clipped at zero, averaged over classes.
pub fn class_homophily(g: &LabeledGraph) -> f64 {
    let n = g.n() as f64;
    let c = g.c();
    let mut same = vec![0usize; c];
    let mut total = vec![0usize; c];
    let mut size = vec![0usize; c];
    for i in 0..g.n() {
        let y = g.labels()[i];
        size[y] += 1;
        same[y] += g.same_class_degree(i);
        total[y] += g.degree(i);
    }
    let sum: f64 = (0..c)
        .map(|l| {
            if total[l] == 0 {
                0.0
            } else {
                (same[l] as f64 / total[l] as f64 - size[l] as f64 / n).max(0.0)
            }
        })
        .sum();
    sum / c as f64
}

/// Mean vector and covariance matrix of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

impl ClassStats {
    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        let k = mean.len();
        if covariance.rows() != k || covariance.cols() != k {
            return Err(Error::InvalidParameter(format!(
                "covariance must be {k}x{k}, got {}x{}",
                covariance.rows(),
                covariance.cols()
            )));
        }
        for a in 0..k {
            if covariance.get(a, a) < 0.0 {
                return Err(Error::InvalidParameter("negative variance".into()));
            }
            for b in 0..a {
                let (x, y) = (covariance.get(a, b), covariance.get(b, a));
                if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
            }
        }
        Ok(ClassStats { mean, covariance })
    }

    /// One-dimensional shorthand.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        ClassStats::new(vec![mean], Matrix::from_vec(1, 1, vec![variance]))
    }

    /// Sample mean and unbiased sample covariance of `rows`.
    ///
    /// Rows are sorted before accumulation, so the result depends only on
    /// the multiset of rows, not their order.
    pub fn from_rows(mut rows: Vec<&[f64]>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidParameter("no rows".into()));
        };
        let k = first.len();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let count = rows.len() as f64;
        let mut mean = vec![0.0; k];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut cov = Matrix::zeros(k, k);
        if rows.len() > 1 {
            for a in 0..k {
                for b in 0..=a {
                    let s: f64 = rows
                        .iter()
                        .map(|r| (r[a] - mean[a]) * (r[b] - mean[b]))
                        .sum::<f64>()
                        / (count - 1.0);
                    cov.row_mut(a)[b] = s;
                    cov.row_mut(b)[a] = s;
                }
            }
        }
        Ok(ClassStats {
            mean,
            covariance: cov,
        })
    }
}

/// Sample statistics of every class of `g`.
pub fn class_stats(g: &LabeledGraph) -> Result<Vec<ClassStats>> {
    let mut rows: Vec<Vec<&[f64]>> = vec![Vec::new(); g.c()];
    for (i, &y) in g.labels().iter().enumerate() {
        rows[y].push(g.features().row(i));
    }
    rows.into_iter()
        .enumerate()
        .map(|(l, r)| {
            if r.is_empty() {
                Err(Error::EmptyClass(l))
            } else {
                ClassStats::from_rows(r)
            }
        })
        .collect()
}

/// `sqrt((μ0-μ1)ᵀ ((Σ0+Σ1)/2)⁻¹ (μ0-μ1))`. A singular averaged covariance
/// is an error.
pub fn feature_distance(a: &ClassStats, b: &ClassStats) -> Result<f64> {
    let k = a.mean.len();
    if b.mean.len() != k {
        return Err(Error::InvalidParameter("class dimensions differ".into()));
    }
    let avg = DMatrix::from_fn(k, k, |r, c| {
        0.5 * (a.covariance.get(r, c) + b.covariance.get(r, c))
    });
    let scale = (0..k).map(|t| avg[(t, t)]).fold(0.0f64, f64::max);
    let chol = avg.cholesky().ok_or(Error::SingularCovariance)?;
    let l = chol.l_dirty();
    let min_pivot = (0..k).map(|t| l[(t, t)]).fold(f64::INFINITY, f64::min);
    if scale == 0.0 || min_pivot * min_pivot <= 1e-12 * scale {
        return Err(Error::SingularCovariance);
    }
    let diff = DVector::from_iterator(k, a.mean.iter().zip(&b.mean).map(|(x, y)| x - y));
    let solved = chol.solve(&diff);
    Ok(diff.dot(&solved).max(0.0).sqrt())
}
