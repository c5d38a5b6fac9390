//! Scaled complementary error function and Gaussian helpers.

use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

const ASYMPTOTIC_FROM: f64 = 10.0;

/// `exp(z²)·erfc(z)`. Overflows to infinity only for `z` below about -26.6,
/// where the true value does too.
pub fn erfcx(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < 0.0 {
        return 2.0 * (z * z).exp() - erfcx(-z);
    }
    if z < ASYMPTOTIC_FROM {
        return (z * z).exp() * erfc(z);
    }
    erfcx_asymptotic(z)
}

// erfcx(z) ~ 1/(z√π) · Σ (-1)^n (2n-1)!! / (2z²)^n
fn erfcx_asymptotic(z: f64) -> f64 {
    let inv = 1.0 / (2.0 * z * z);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..40 {
        let next = -term * (2 * n - 1) as f64 * inv;
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (z * PI.sqrt())
}

/// `ln(erfcx(z))`, finite for every finite `z`.
pub fn ln_erfcx(z: f64) -> f64 {
    if z < 0.0 {
        // erfc(z) lies in (1, 2] here so the log is harmless.
        z * z + erfc(z).ln()
    } else {
        erfcx(z).ln()
    }
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

pub fn norm_pdf(x: f64) -> f64 {
    norm_ln_pdf(x).exp()
}

pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
