//! Weighted sampling without replacement.
//!
//! Drawing items one at a time with probability proportional to weight and
//! renormalizing after each draw has the same law as giving each item the
//! key `E_j / w_j` (`E_j ~ Exp(1)` i.i.d.) and taking the `m` smallest keys,
//! in increasing key order. Keys are compared in log space,
//! `ln w_j - ln E_j` (largest first), so callers holding log-weights such
//! as `τ·h` never exponentiate.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Samples `m` distinct indices from `weights`, returned in draw order.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if let Some(bad) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "weight {bad} is {} (must be positive and finite)",
            weights[bad]
        )));
    }
    let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    sample_log_weights(&log_weights, m, rng)
}

/// As [`weighted_sample_without_replacement`] with weights given as logs.
pub fn sample_log_weights<R: Rng + ?Sized>(
    log_weights: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if m > log_weights.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {m} items from {}",
            log_weights.len()
        )));
    }
    if let Some(bad) = log_weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "log-weight {bad} is {}",
            log_weights[bad]
        )));
    }
    let mut keyed: Vec<(f64, usize)> = log_weights
        .iter()
        .enumerate()
        .map(|(j, &lw)| {
            let e: f64 = Exp1.sample(rng);
            (lw - e.ln(), j)
        })
        .collect();
    if m == 0 {
        return Ok(Vec::new());
    }
    // Largest key first; index breaks (measure-zero) ties deterministically.
    let by_key = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
    };
    if m < keyed.len() {
        keyed.select_nth_unstable_by(m - 1, by_key);
        keyed.truncate(m);
    }
    keyed.sort_unstable_by(by_key);
    Ok(keyed.into_iter().map(|(_, j)| j).collect())
}

/// Softmax of `logits` with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn full_draw_returns_everything() {
        let mut rng = substream(1, 0);
        let mut s = weighted_sample_without_replacement(&[1.0; 6], 6, &mut rng).unwrap();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = substream(1, 0);
        assert!(weighted_sample_without_replacement(&[1.0, 2.0], 3, &mut rng).is_err());
        assert!(weighted_sample_without_replacement(&[1.0, 0.0], 1, &mut rng).is_err());
        assert!(weighted_sample_without_replacement(&[1.0, -1.0], 1, &mut rng).is_err());
        assert!(weighted_sample_without_replacement(&[1.0, f64::NAN], 1, &mut rng).is_err());
    }

    #[test]
    fn single_draw_follows_weights() {
        let mut rng = substream(5, 0);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| weighted_sample_without_replacement(&[0.9, 0.05, 0.05], 1, &mut rng).unwrap()[0] == 0)
            .count();
        let rate = hits as f64 / trials as f64;
        assert!((rate - 0.9).abs() < 0.01, "{rate}");
    }

    #[test]
    fn deterministic_given_stream() {
        let w = [0.3, 1.0, 2.0, 0.1, 5.0];
        let a = weighted_sample_without_replacement(&w, 3, &mut substream(3, 9)).unwrap();
        let b = weighted_sample_without_replacement(&w, 3, &mut substream(3, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, std::f64::consts::LN_2, 0.0]);
        for (got, want) in p.iter().zip([0.25, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
        let p = softmax(&[1000.0, 0.0]);
        assert_eq!(p[0], 1.0);
        assert!(p.iter().all(|v| v.is_finite()));
    }
}
