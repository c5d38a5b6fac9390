//! Adaptive Gauss–Kronrod integration and bracketed root finding.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes (indices 1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` by recursive bisection until the
/// Gauss/Kronrod discrepancy on each piece is within its share of `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth - 1) + recurse(f, mid, b, 0.5 * tol, depth - 1)
    }
    recurse(&f, a, b, tol, 40)
}

/// Integrates over `[a, b]` after splitting at interior `breaks` (kinks).
pub fn integrate_with_breaks(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    points.push(b);
    points.sort_by(f64::total_cmp);
    let share = tol / (points.len() - 1) as f64;
    points.windows(2).map(|w| integrate(&f, w[0], w[1], share)).sum()
}

/// Root of `f` on `[lo, hi]` where `f(lo)` and `f(hi)` differ in sign.
/// Bisection narrows the bracket; secant steps that stay inside it finish.
pub fn find_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let fail = |reason: &str| Error::RootFinding {
        lo,
        hi,
        reason: reason.to_string(),
    };
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(fail("non-finite value at bracket end"));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(fail("no sign change"));
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-3 {
            break;
        }
    }
    let (mut x0, mut x1) = (a, b);
    let (mut f0, mut f1) = (f(x0), f(x1));
    for _ in 0..100 {
        if (x1 - x0).abs() <= tol {
            return Ok(x1);
        }
        let secant = if f1 != f0 { x1 - f1 * (x1 - x0) / (f1 - f0) } else { f64::NAN };
        let next = if secant.is_finite() && secant > a && secant < b {
            secant
        } else {
            0.5 * (a + b)
        };
        let fn_ = f(next);
        if fn_ == 0.0 {
            return Ok(next);
        }
        if fn_.signum() == fa.signum() {
            a = next;
            fa = fn_;
        } else {
            b = next;
        }
        x0 = x1;
        f0 = f1;
        x1 = next;
        f1 = fn_;
        if b - a <= tol {
            return Ok(0.5 * (a + b));
        }
    }
    Err(fail("did not converge"))
}
