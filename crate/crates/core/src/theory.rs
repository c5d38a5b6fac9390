//! Closed forms for the neighbor feature distribution of a one-dimensional
//! CSBM-X graph, plus the independent checks used to trust them.
//!
//! A node with class-controlled feature `x_i` picks a neighbor whose own
//! class-controlled feature `x*` has density proportional to
//! `exp(-τ|x_i - x*|)·φ(x*)`. Everything here derives from that density.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, SQRT_2};

use crate::csbmx::{generate_csbmx, CsbmxParams};
use crate::error::{Error, Result};
use crate::quadrature::{find_root, integrate_with_breaks};
use crate::rng::{derive_seed, stream, substream};
use crate::sgnn::{convolve, threshold_classifier, ConvolutionSpec};
use crate::special::{ln_erfcx, log_sum_exp, norm_cdf, norm_ln_pdf};

/// Integration range for the neighbor density; the Gaussian factor is below
/// 1e-31 outside it.
pub const QUAD_RANGE: f64 = 12.0;
pub const QUAD_TOL: f64 = 1e-10;
pub const MIN_ACCEPTANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub x_i: f64,
    pub tau: f64,
    pub expected_neighbor: f64,
    pub method: Method,
}

fn log_erfc_pair(x_i: f64, tau: f64) -> (f64, f64) {
    (ln_erfcx((tau - x_i) / SQRT_2), ln_erfcx((tau + x_i) / SQRT_2))
}

/// `E[x*]` in closed form.
///
/// The textbook expression is a ratio of `erfc` terms weighted by
/// `exp(2τx_i)`; after factoring out the common Gaussian it reduces to
/// `τ·tanh((ln erfcx(z₁) - ln erfcx(z₂)) / 2)`, which never overflows.
pub fn expected_neighbor_feature(x_i: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    let (l1, l2) = log_erfc_pair(x_i, tau);
    tau * (0.5 * (l1 - l2)).tanh()
}

pub fn neighbor_ln_density(x_star: f64, x_i: f64, tau: f64) -> f64 {
    let (l1, l2) = log_erfc_pair(x_i, tau);
    LN_2 - tau * (x_i - x_star).abs() + 0.5 * x_i * x_i + norm_ln_pdf(x_star) - log_sum_exp(l1, l2)
}

pub fn neighbor_density(x_star: f64, x_i: f64, tau: f64) -> f64 {
    neighbor_ln_density(x_star, x_i, tau).exp()
}

fn integrate_density(x_i: f64, tau: f64, moment: impl Fn(f64) -> f64) -> f64 {
    integrate_with_breaks(
        |x| moment(x) * neighbor_density(x, x_i, tau),
        -QUAD_RANGE,
        QUAD_RANGE,
        &[x_i],
        QUAD_TOL,
    )
}

/// Total mass of the density over the integration range.
pub fn density_mass(x_i: f64, tau: f64) -> f64 {
    integrate_density(x_i, tau, |_| 1.0)
}

/// `E[x*]` by adaptive quadrature of the density.
pub fn expected_neighbor_quadrature(x_i: f64, tau: f64) -> f64 {
    integrate_density(x_i, tau, |x| x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub acceptance_rate: f64,
}

/// Draws `samples` neighbor features by rejection sampling.
///
/// For `τ ≥ 0` the proposal is `N(0,1)`. For `τ < 0` the target is
/// `exp(t|x_i - x|)·φ(x)` with `t = -τ`, which is dominated by
/// `exp(t|x_i| + t²/2)·(φ(x - t) + φ(x + t))`, so the proposal is the
/// equal mixture of `N(±t, 1)`.
pub fn monte_carlo_neighbor(x_i: f64, tau: f64, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 samples, got {samples}")));
    }
    if !(x_i.is_finite() && tau.is_finite()) {
        return Err(Error::InvalidParameter("x_i and tau must be finite".into()));
    }
    let mut rng = substream(seed, stream::NODE_BASE);
    let t = -tau;
    let draw = |rng: &mut crate::rng::StreamRng| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        if tau >= 0.0 {
            z
        } else if rng.random::<bool>() {
            z + t
        } else {
            z - t
        }
    };
    let ln_accept = |x: f64| -> f64 {
        if tau >= 0.0 {
            -tau * (x_i - x).abs()
        } else {
            let mix = log_sum_exp(norm_ln_pdf(x - t), norm_ln_pdf(x + t));
            t * (x_i - x).abs() + norm_ln_pdf(x) - t * x_i.abs() - 0.5 * t * t - mix
        }
    };

    // Welford accumulation keeps the variance stable for long runs.
    let (mut count, mut mean, mut m2) = (0usize, 0.0, 0.0);
    let mut proposals = 0usize;
    let budget = (samples as f64 / MIN_ACCEPTANCE).ceil() as usize;
    while count < samples {
        if proposals >= budget {
            return Err(Error::DegenerateSampler(count as f64 / proposals as f64));
        }
        proposals += 1;
        let x = draw(&mut rng);
        let e: f64 = Exp1.sample(&mut rng);
        // accept with probability exp(ln_accept) <=> E > -ln_accept
        if -e <= ln_accept(x) {
            count += 1;
            let delta = x - mean;
            mean += delta / count as f64;
            m2 += delta * (x - mean);
        }
        if proposals == 10 * samples && (count as f64) < MIN_ACCEPTANCE * proposals as f64 {
            return Err(Error::DegenerateSampler(count as f64 / proposals as f64));
        }
    }
    let var = m2 / (count - 1) as f64;
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / count as f64).sqrt(),
        acceptance_rate: count as f64 / proposals as f64,
    })
}

/// Parameters for the limiting error rate of the threshold classifier on
/// convolved features of a symmetric two-class graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerQuery {
    pub tau: f64,
    /// Class means are `±mu`.
    pub mu: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub root_tol: f64,
}

impl BerQuery {
    pub fn new(tau: f64, mu: f64, p_plus: f64, p_minus: f64) -> Self {
        BerQuery {
            tau,
            mu,
            p_plus,
            p_minus,
            root_tol: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return bad("mu must be positive");
        }
        let in_range = |p: f64| p > 0.0 && p < 0.5;
        if !in_range(self.p_plus) || !in_range(self.p_minus) {
            return bad("p_plus and p_minus must lie in (0, 1/2)");
        }
        if self.p_plus == self.p_minus {
            return bad("p_plus and p_minus must differ");
        }
        if !self.tau.is_finite() || !(self.root_tol > 0.0) {
            return bad("tau must be finite and root_tol positive");
        }
        Ok(())
    }

    /// Distance of the convolved class mean from the decision threshold.
    pub fn margin(&self) -> f64 {
        (self.p_plus - self.p_minus).abs() / (self.p_plus + self.p_minus) * self.mu
    }
}

const ROOT_BRACKET: f64 = 50.0;

/// Probability, over `x_i ~ N(0,1)`, that `margin + E[x*](x_i)` lands on the
/// wrong side of zero. `E[x*]` is monotone in `x_i` (increasing for `τ > 0`,
/// decreasing for `τ < 0`) and bounded by `|τ|`, so the error region is a
/// half-line whose end is found by root finding.
pub fn asymptotic_ber(q: &BerQuery) -> Result<f64> {
    q.validate()?;
    let a = q.margin();
    let tau = q.tau;
    if tau.abs() <= a {
        return Ok(0.0);
    }
    let f = |x: f64| expected_neighbor_feature(x, tau) + a;
    check_monotone(&f, tau)?;
    let root = find_root(f, -ROOT_BRACKET, ROOT_BRACKET, q.root_tol)?;
    Ok(if tau > 0.0 { norm_cdf(root) } else { norm_cdf(-root) })
}

fn check_monotone(f: &impl Fn(f64) -> f64, tau: f64) -> Result<()> {
    let steps = 2000;
    let mut prev = f(-ROOT_BRACKET);
    for s in 1..=steps {
        let x = -ROOT_BRACKET + 2.0 * ROOT_BRACKET * s as f64 / steps as f64;
        let cur = f(x);
        let step = (cur - prev) * tau.signum();
        if step < -1e-12 {
            return Err(Error::RootFinding {
                lo: -ROOT_BRACKET,
                hi: ROOT_BRACKET,
                reason: format!("crossing function is not monotone near x = {x}"),
            });
        }
        prev = cur;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Misclassification rate of the threshold rule on once-convolved features
/// of generated graphs.
///
/// Features are projected onto `μ₁ - μ₀` about the midpoint of the class
/// means; when `d⁻ > d⁺` convolution swaps the sides, so the rule is
/// flipped.
pub fn finite_n_ber_estimate(params: &CsbmxParams, trials: usize, seed: u64) -> Result<ErrorEstimate> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let direction: Vec<f64> = params.mu1.iter().zip(&params.mu0).map(|(a, b)| a - b).collect();
    let midpoint: Vec<f64> = params.mu1.iter().zip(&params.mu0).map(|(a, b)| 0.5 * (a + b)).collect();
    let flip = params.d_minus > params.d_plus;
    let mut errors = Vec::with_capacity(trials);
    for t in 0..trials {
        let p = CsbmxParams {
            seed: derive_seed(seed, 0, t as u64),
            ..params.clone()
        };
        let g = generate_csbmx(&p)?;
        let conv = convolve(&g, g.features(), &ConvolutionSpec::row_normalized(1))?;
        let wrong = conv
            .iter_rows()
            .zip(g.labels())
            .filter(|(row, &y)| {
                let score: f64 = row
                    .iter()
                    .zip(&midpoint)
                    .zip(&direction)
                    .map(|((x, m), d)| (x - m) * d)
                    .sum();
                let score = if flip { -score } else { score };
                threshold_classifier(score) != y
            })
            .count();
        errors.push(wrong as f64 / g.n() as f64);
    }
    let (mean, std) = mean_std(&errors);
    Ok(ErrorEstimate { mean, std })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationRow {
    pub x_i: f64,
    pub tau: f64,
    pub e_closed: f64,
    pub e_quad: f64,
    pub e_mc: f64,
    pub se_mc: f64,
}

/// Evaluates all three estimators on the grid `xs × taus` (row-major in `xs`).
pub fn expectation_grid(xs: &[f64], taus: &[f64], samples: usize, seed: u64) -> Result<Vec<ExpectationRow>> {
    let cells: Vec<(f64, f64)> = xs.iter().flat_map(|&x| taus.iter().map(move |&t| (x, t))).collect();
    crate::par_map(cells.len(), |c| {
        let (x_i, tau) = cells[c];
        let mc = monte_carlo_neighbor(x_i, tau, samples, derive_seed(seed, c as u64, 0))?;
        Ok(ExpectationRow {
            x_i,
            tau,
            e_closed: expected_neighbor_feature(x_i, tau),
            e_quad: expected_neighbor_quadrature(x_i, tau),
            e_mc: mc.mean,
            se_mc: mc.std_error,
        })
    })
    .into_iter()
    .collect()
}

pub fn expectation_csv(rows: &[ExpectationRow]) -> String {
    let mut out = String::from("x_i,tau,e_closed,e_quad,e_mc,se_mc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.x_i, r.tau, r.e_closed, r.e_quad, r.e_mc, r.se_mc
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub tau: f64,
    pub mu: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub ber: f64,
}

pub fn ber_curve(taus: &[f64], mu: f64, p_plus: f64, p_minus: f64) -> Result<Vec<BerRow>> {
    taus.iter()
        .map(|&tau| {
            let ber = asymptotic_ber(&BerQuery::new(tau, mu, p_plus, p_minus))?;
            Ok(BerRow {
                tau,
                mu,
                p_plus,
                p_minus,
                ber,
            })
        })
        .collect()
}

pub fn ber_csv(rows: &[BerRow]) -> String {
    let mut out = String::from("tau,mu,p_plus,p_minus,ber\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.tau, r.mu, r.p_plus, r.p_minus, r.ber));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct evaluation of the unscaled erfc expression, usable for small
    // arguments only.
    fn naive(x: f64, tau: f64) -> f64 {
        let a = libm::erfc((tau - x) / SQRT_2);
        let b = (2.0 * tau * x).exp() * libm::erfc((tau + x) / SQRT_2);
        tau * (a - b) / (a + b)
    }

    #[test]
    fn closed_form_matches_unscaled_expression() {
        for &x in &[-2.0, -0.5, 0.0, 0.7, 2.0] {
            for &tau in &[-1.5, -0.3, 0.4, 1.0, 2.0] {
                let want = naive(x, tau);
                assert!((expected_neighbor_feature(x, tau) - want).abs() < 1e-12, "x={x} tau={tau}");
            }
        }
    }

    #[test]
    fn closed_form_edge_cases() {
        assert_eq!(expected_neighbor_feature(1.7, 0.0), 0.0);
        for &x in &[-2.0, -1.0, 1.0, 2.0] {
            assert_eq!(expected_neighbor_feature(x, 1.0).signum(), f64::signum(x));
        }
        // The unscaled form overflows here.
        for &(x, tau) in &[(400.0, 1.5), (-400.0, 1.5), (300.0, -2.0), (30.0, 25.0)] {
            let e = expected_neighbor_feature(x, tau);
            assert!(e.is_finite() && e.abs() <= tau.abs(), "x={x} tau={tau}: {e}");
        }
    }

    #[test]
    fn density_is_normalized_and_gaussian_at_zero() {
        for &x in &[-3.0, 0.0, 1.5, 3.0] {
            for &tau in &[-2.0, -0.5, 0.0, 1.0, 2.0] {
                assert!((density_mass(x, tau) - 1.0).abs() < 1e-8, "x={x} tau={tau}");
            }
        }
        for &xs in &[-1.0, 0.0, 2.5] {
            let want = crate::special::norm_pdf(xs);
            assert!((neighbor_density(xs, 0.8, 0.0) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_form() {
        for &x in &[-3.0, -1.0, 0.5, 2.0] {
            for &tau in &[-2.0, -0.5, 0.5, 2.0] {
                let diff = (expected_neighbor_quadrature(x, tau) - expected_neighbor_feature(x, tau)).abs();
                assert!(diff < 1e-8, "x={x} tau={tau}: {diff}");
            }
        }
    }

    #[test]
    fn monte_carlo_basics() {
        let est = monte_carlo_neighbor(0.3, 0.0, 20_000, 1).unwrap();
        assert!(est.mean.abs() < 4.0 * est.std_error);
        assert!(monte_carlo_neighbor(0.0, 1.0, 999, 1).is_err());
        assert_eq!(
            monte_carlo_neighbor(1.0, -1.0, 2000, 9).unwrap(),
            monte_carlo_neighbor(1.0, -1.0, 2000, 9).unwrap()
        );
        for &tau in &[-2.0, 2.0] {
            let est = monte_carlo_neighbor(2.0, tau, 50_000, 3).unwrap();
            let want = expected_neighbor_feature(2.0, tau);
            assert!((est.mean - want).abs() < 4.0 * est.std_error, "tau={tau}");
        }
    }

    #[test]
    fn ber_examples() {
        let zero = asymptotic_ber(&BerQuery::new(0.0, 0.5, 0.15, 0.05)).unwrap();
        assert_eq!(zero, 0.0);
        // Margin is 0.25, so |tau| up to 0.25 is still error free.
        assert_eq!(asymptotic_ber(&BerQuery::new(0.2, 0.5, 0.15, 0.05)).unwrap(), 0.0);
        let b = asymptotic_ber(&BerQuery::new(1.0, 0.5, 0.15, 0.05)).unwrap();
        assert!(b > 0.0 && b < 0.5);
        // heterophilic edges give the same limit
        let h = asymptotic_ber(&BerQuery::new(1.0, 0.5, 0.05, 0.15)).unwrap();
        assert_eq!(b, h);
        assert!(asymptotic_ber(&BerQuery::new(1.0, 0.5, 0.1, 0.1)).is_err());
        assert!(asymptotic_ber(&BerQuery::new(1.0, -0.5, 0.15, 0.05)).is_err());
    }

    #[test]
    fn csv_headers() {
        let rows = ber_curve(&[0.0], 0.5, 0.15, 0.05).unwrap();
        assert_eq!(ber_csv(&rows), "tau,mu,p_plus,p_minus,ber\n0,0.5,0.15,0.05,0\n");
        assert!(expectation_csv(&[]).starts_with("x_i,tau,e_closed,e_quad,e_mc,se_mc\n"));
    }
}
