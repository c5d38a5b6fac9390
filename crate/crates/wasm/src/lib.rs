//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export returns a plain `Float64Array` so the page can draw it
//! directly. Graph sizes are capped to keep the page responsive.

use cfh_core::csbmx::{generate_csbmx, CsbmxParams};
use cfh_core::metrics::{cfh_report, BaselineMode};
use cfh_core::shuffle::{shuffle_features, ShuffleSpec};
use cfh_core::theory::{asymptotic_ber, expected_neighbor_feature, BerQuery};
use wasm_bindgen::prelude::*;

pub const MAX_NODES: usize = 5000;

fn js_err(e: cfh_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn params(n: usize, fd: f64, d_plus: usize, d_minus: usize, tau: f64, seed: u64) -> Result<CsbmxParams, JsError> {
    if n > MAX_NODES {
        return Err(JsError::new(&format!("at most {MAX_NODES} nodes in the browser")));
    }
    Ok(CsbmxParams::symmetric_1d(n, fd, d_plus, d_minus, tau, seed))
}

fn graph_cfh(p: &CsbmxParams) -> Result<f64, cfh_core::Error> {
    let g = generate_csbmx(p)?;
    Ok(cfh_report(&g, BaselineMode::Exact)?.graph_cfh)
}

/// Graph CFH of a generated graph for each τ in `taus`. The same seed is
/// used throughout, so only the edges change along the curve.
#[wasm_bindgen]
pub fn cfh_vs_tau(
    n: usize,
    fd: f64,
    d_plus: usize,
    d_minus: usize,
    taus: &[f64],
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    taus.iter()
        .map(|&tau| graph_cfh(&params(n, fd, d_plus, d_minus, tau, seed)?).map_err(js_err))
        .collect()
}

/// Expected class-controlled neighbor feature at each `x` for one τ.
#[wasm_bindgen]
pub fn expected_neighbor_curve(tau: f64, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| expected_neighbor_feature(x, tau)).collect()
}

/// Limiting Bayes error of the threshold classifier at each τ.
#[wasm_bindgen]
pub fn ber_curve(mu: f64, p_plus: f64, p_minus: f64, taus: &[f64]) -> Result<Vec<f64>, JsError> {
    taus.iter()
        .map(|&tau| asymptotic_ber(&BerQuery::new(tau, mu, p_plus, p_minus)).map_err(js_err))
        .collect()
}

/// Graph CFH after class-wise shuffling of a fraction of the features, for
/// each ratio in `ratios`.
#[wasm_bindgen]
pub fn shuffle_curve(
    n: usize,
    fd: f64,
    d_plus: usize,
    d_minus: usize,
    tau: f64,
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let g = generate_csbmx(&params(n, fd, d_plus, d_minus, tau, seed)?).map_err(js_err)?;
    ratios
        .iter()
        .map(|&r| {
            let s = shuffle_features(&g, &ShuffleSpec::classwise(r, seed)).map_err(js_err)?;
            Ok(cfh_report(&s, BaselineMode::Exact).map_err(js_err)?.graph_cfh)
        })
        .collect()
}
