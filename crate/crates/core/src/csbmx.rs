//! CSBM-X and CSBM-X2 generators.
//!
//! Labels and features are drawn first. Each node then samples a fixed
//! number of same-class and different-class out-neighbors without
//! replacement, with weight `exp(τ·h_ij)` where `h_ij` is the pair-level
//! CFH on the realized class-controlled features.
//!
//! Labels, features, degrees, and each node's edge draws come from separate
//! random streams, so `τ` affects nothing but the edges.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{partition_labels, LabeledGraph};
use crate::matrix::{l2_distance, Matrix};
use crate::metrics::{baseline_estimate, center_by_class, class_means, pair_cfh, BaselineMode};
use crate::par_map;
use crate::rng::{stream, substream, StreamRng, RNG_ALGORITHM};
use crate::sampling::{sample_log_weights, softmax};

/// A covariance given either as a variance (meaning `v·I`) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariance {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    fn to_matrix(&self, k: usize) -> Result<Matrix> {
        match self {
            Covariance::Scalar(v) => {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(Error::InvalidParameter(format!("variance {v} must be >= 0")));
                }
                let mut m = Matrix::zeros(k, k);
                for t in 0..k {
                    m.row_mut(t)[t] = *v;
                }
                Ok(m)
            }
            Covariance::Full(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::InvalidParameter(format!("covariance must be {k}x{k}")));
                }
                Ok(Matrix::from_rows(rows))
            }
        }
    }
}

/// A matrix `L` with `L Lᵀ = cov`; errors unless `cov` is symmetric PSD.
pub fn gaussian_factor(cov: &Matrix) -> Result<Matrix> {
    let k = cov.rows();
    let dense = DMatrix::from_fn(k, k, |r, c| cov.get(r, c));
    if (&dense - dense.transpose()).abs().max() > 1e-12 * dense.abs().max().max(1.0) {
        return Err(Error::InvalidParameter("covariance is not symmetric".into()));
    }
    let is_diagonal = (0..k).all(|r| (0..k).all(|c| r == c || cov.get(r, c) == 0.0));
    if is_diagonal {
        let mut l = Matrix::zeros(k, k);
        for t in 0..k {
            let v = cov.get(t, t);
            if v < 0.0 {
                return Err(Error::InvalidParameter("negative variance".into()));
            }
            l.row_mut(t)[t] = v.sqrt();
        }
        return Ok(l);
    }
    if let Some(chol) = dense.clone().cholesky() {
        let l = chol.l();
        return Ok(Matrix::from_vec(k, k, (0..k * k).map(|t| l[(t / k, t % k)]).collect()));
    }
    // Singular PSD: fall back to the eigendecomposition.
    let eig = SymmetricEigen::new(dense);
    let scale = eig.eigenvalues.abs().max().max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
        return Err(Error::InvalidParameter("covariance is not positive semidefinite".into()));
    }
    let mut l = Matrix::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            l.row_mut(r)[c] = eig.eigenvectors[(r, c)] * eig.eigenvalues[c].max(0.0).sqrt();
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsbmxParams {
    pub n: usize,
    pub k: usize,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub sigma0: Covariance,
    pub sigma1: Covariance,
    pub d_plus: usize,
    pub d_minus: usize,
    pub tau: f64,
    pub seed: u64,
    /// Class-control with the parameter means instead of the sample means.
    #[serde(default)]
    pub population_means: bool,
}

impl CsbmxParams {
    /// One-dimensional, unit-variance classes at `∓fd/2`.
    pub fn symmetric_1d(n: usize, fd: f64, d_plus: usize, d_minus: usize, tau: f64, seed: u64) -> Self {
        CsbmxParams {
            n,
            k: 1,
            mu0: vec![-fd / 2.0],
            mu1: vec![fd / 2.0],
            sigma0: Covariance::Scalar(1.0),
            sigma1: Covariance::Scalar(1.0),
            d_plus,
            d_minus,
            tau,
            seed,
            population_means: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return bad(format!("n = {} must be even and >= 2", self.n));
        }
        if self.k == 0 || self.mu0.len() != self.k || self.mu1.len() != self.k {
            return bad(format!("means must have length k = {}", self.k));
        }
        if self.mu0.iter().chain(&self.mu1).any(|v| !v.is_finite()) || !self.tau.is_finite() {
            return bad("means and tau must be finite".into());
        }
        let half = self.n / 2;
        if self.d_plus >= half {
            return bad(format!("d_plus = {} must be < n/2 = {half}", self.d_plus));
        }
        if self.d_minus > half {
            return bad(format!("d_minus = {} must be <= n/2 = {half}", self.d_minus));
        }
        gaussian_factor(&self.sigma0.to_matrix(self.k)?)?;
        gaussian_factor(&self.sigma1.to_matrix(self.k)?)?;
        Ok(())
    }
}

/// Softmax of `τ·h_ij` over `candidates`.
pub fn neighbor_weights(i: usize, xc: &Matrix, baseline_i: f64, tau: f64, candidates: &[usize]) -> Vec<f64> {
    let logits: Vec<f64> = candidates
        .iter()
        .map(|&j| tau * pair_cfh(i, j, xc, baseline_i))
        .collect();
    softmax(&logits)
}

fn balanced_labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let per = n / classes;
    let mut labels: Vec<usize> = (0..classes).flat_map(|c| std::iter::repeat_n(c, per)).collect();
    labels.shuffle(&mut substream(seed, stream::LABELS));
    labels
}

fn gaussian_features(labels: &[usize], means: &[Vec<f64>], factors: &[Matrix], seed: u64) -> Matrix {
    let k = means[0].len();
    let mut rng: StreamRng = substream(seed, stream::FEATURES);
    let mut x = Matrix::zeros(labels.len(), k);
    let mut z = vec![0.0; k];
    for (i, &y) in labels.iter().enumerate() {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let l = &factors[y];
        for (r, out) in x.row_mut(i).iter_mut().enumerate() {
            let lr = l.row(r);
            *out = means[y][r] + lr.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    x
}

/// Samples every node's out-neighbors. `degrees[i] = (d⁺_i, d⁻_i)`.
fn sample_edges(
    labels: &[usize],
    classes: usize,
    xc: &Matrix,
    tau: f64,
    degrees: &[(usize, usize)],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let baseline = baseline_estimate(xc, BaselineMode::Exact)?;
    let partition = partition_labels(labels, classes);
    let complements: Vec<Vec<usize>> = (0..classes).map(|c| partition.complement(c)).collect();
    let lists = par_map(labels.len(), |i| -> Result<Vec<usize>> {
        let y = labels[i];
        let (d_plus, d_minus) = degrees[i];
        let mut rng = substream(seed, stream::NODE_BASE + i as u64);
        let xi = xc.row(i);
        let b = baseline[i];
        let log_weight = |j: usize| tau * (b - l2_distance(xi, xc.row(j)));

        let same: Vec<usize> = partition.members(y).iter().copied().filter(|&j| j != i).collect();
        let lw: Vec<f64> = same.iter().map(|&j| log_weight(j)).collect();
        let mut out: Vec<usize> = sample_log_weights(&lw, d_plus, &mut rng)?
            .into_iter()
            .map(|t| same[t])
            .collect();

        let other = &complements[y];
        let lw: Vec<f64> = other.iter().map(|&j| log_weight(j)).collect();
        out.extend(sample_log_weights(&lw, d_minus, &mut rng)?.into_iter().map(|t| other[t]));
        out.sort_unstable();
        Ok(out)
    });
    lists.into_iter().collect()
}

pub fn generate_csbmx(p: &CsbmxParams) -> Result<LabeledGraph> {
    p.validate()?;
    let labels = balanced_labels(p.n, 2, p.seed);
    let means = vec![p.mu0.clone(), p.mu1.clone()];
    let factors = [
        gaussian_factor(&p.sigma0.to_matrix(p.k)?)?,
        gaussian_factor(&p.sigma1.to_matrix(p.k)?)?,
    ];
    let x = gaussian_features(&labels, &means, &factors, p.seed);
    let control = if p.population_means {
        means
    } else {
        class_means(&x, &labels, 2)?
    };
    let xc = center_by_class(&x, &labels, &control);
    let degrees = vec![(p.d_plus, p.d_minus); p.n];
    let edges = sample_edges(&labels, 2, &xc, p.tau, &degrees, p.seed)?;
    LabeledGraph::new(2, edges, x, labels, None, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Csbmx2Params {
    pub n: usize,
    /// Class count; must divide `n`. Features are `c`-dimensional.
    pub c: usize,
    /// L1 distance between any two class means; `μ_ℓ = (δ/2)·e_ℓ`.
    pub delta: f64,
    #[serde(default = "unit")]
    pub variance: f64,
    /// Same-class share of each node's degree.
    pub r: f64,
    pub alpha: f64,
    pub d_min: usize,
    pub d_max: usize,
    pub tau: f64,
    pub seed: u64,
    #[serde(default)]
    pub population_means: bool,
}

fn unit() -> f64 {
    1.0
}

impl Csbmx2Params {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.c < 2 || self.n == 0 || !self.n.is_multiple_of(self.c) {
            return bad(format!("c = {} must be >= 2 and divide n = {}", self.c, self.n));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return bad(format!("r = {} must lie in [0, 1]", self.r));
        }
        if self.d_min > self.d_max {
            return bad(format!("d_min = {} exceeds d_max = {}", self.d_min, self.d_max));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return bad(format!("variance = {} must be >= 0", self.variance));
        }
        if !self.delta.is_finite() || !self.tau.is_finite() {
            return bad("delta and tau must be finite".into());
        }
        Ok(())
    }

    pub fn class_means(&self) -> Vec<Vec<f64>> {
        (0..self.c)
            .map(|l| {
                let mut m = vec![0.0; self.c];
                m[l] = self.delta / 2.0;
                m
            })
            .collect()
    }

    /// `(d⁺_i, d⁻_i)` for every node: a Lomax (Pareto on `[0, ∞)`) draw,
    /// rounded, shifted by `d_min`, clipped to `d_max`, then split by `r`
    /// with ties rounded to even.
    pub fn degrees(&self) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        let pareto = Pareto::new(1.0, self.alpha)
            .map_err(|e| Error::InvalidParameter(format!("pareto: {e}")))?;
        let mut rng = substream(self.seed, stream::DEGREES);
        let class_size = self.n / self.c;
        (0..self.n)
            .map(|i| {
                let draw: f64 = pareto.sample(&mut rng) - 1.0;
                let d = (draw.round().min(self.d_max as f64) as usize)
                    .saturating_add(self.d_min)
                    .clamp(self.d_min, self.d_max);
                let d_plus = (self.r * d as f64).round_ties_even() as usize;
                let d_minus = d - d_plus;
                if d_plus > class_size - 1 || d_minus > self.n - class_size {
                    return Err(Error::InvalidParameter(format!(
                        "node {i}: degree split ({d_plus}, {d_minus}) exceeds class sizes"
                    )));
                }
                Ok((d_plus, d_minus))
            })
            .collect()
    }
}

pub fn generate_csbmx2(p: &Csbmx2Params) -> Result<LabeledGraph> {
    p.validate()?;
    let degrees = p.degrees()?;
    let labels = balanced_labels(p.n, p.c, p.seed);
    let means = p.class_means();
    let mut factor = Matrix::zeros(p.c, p.c);
    for t in 0..p.c {
        factor.row_mut(t)[t] = p.variance.sqrt();
    }
    let factors = vec![factor; p.c];
    let x = gaussian_features(&labels, &means, &factors, p.seed);
    let control = if p.population_means {
        means
    } else {
        class_means(&x, &labels, p.c)?
    };
    let xc = center_by_class(&x, &labels, &control);
    let edges = sample_edges(&labels, p.c, &xc, p.tau, &degrees, p.seed)?;
    LabeledGraph::new(p.c, edges, x, labels, None, true)
}

/// Parameters, seed, and RNG algorithm of a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub params: serde_json::Value,
}

impl Provenance {
    pub fn new<P: Serialize>(generator: &str, seed: u64, params: &P) -> Result<Self> {
        Ok(Provenance {
            generator: generator.to_string(),
            seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            params: serde_json::to_value(params)?,
        })
    }
}
