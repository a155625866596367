//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string; the `*_json` functions hold the logic so they can be tested natively.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::DMatrix;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use sparsemix::data::{simulate, SimulationDesign};
use sparsemix::eval::{adjusted_rand_index, support_recovery};
use sparsemix::fit::{fit_multistart, select_lambda_default, FitConfig};
use sparsemix::model::log_inverse_logit;
use sparsemix::mstep::logistic_bound;
use sparsemix::scores::estimate_scores;
use sparsemix::stiefel::GpConfig;

const K: usize = 3;
const L: usize = 2;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn design(n: usize, d: usize, m: f64, c: f64, seed: u64) -> SimulationDesign {
    SimulationDesign::new(n, d, m, c, seed).with_clusters(K, L)
}

/// Simulates three clusters in a plane, fits at a fixed penalty and returns
/// the score coordinates, labels, loadings and objective trace.
pub fn simulate_and_fit_json(n: usize, d: usize, m: f64, c: f64, lambda: f64, starts: usize, seed: u64) -> Result<Value, String> {
    let sample = simulate(&design(n, d, m, c, seed)).map_err(|e| e.to_string())?;
    let report = fit_multistart(&sample.data, &FitConfig::new(K, L, lambda).with_starts(starts).with_seed(seed)).map_err(|e| e.to_string())?;
    let scores = estimate_scores(&sample.data, &report.params, &GpConfig::default()).map_err(|e| e.to_string())?;
    let ari = adjusted_rand_index(&sample.true_labels, &report.hard_labels).map_err(|e| e.to_string())?.value;
    let support = support_recovery(&sample.true_params.a, &report.params.a).map_err(|e| e.to_string())?;
    Ok(json!({
        "scores": rows(&scores.scores.g),
        "true_labels": sample.true_labels,
        "labels": report.hard_labels,
        "ari": ari,
        "f": rows(&report.params.f),
        "a": rows(&report.params.a),
        "true_a": rows(&sample.true_params.a),
        "nonzeros": report.nonzero_loadings(),
        "true_zero_rate": support.true_zero_rate,
        "trace": report.trace,
        "iterations": report.iterations,
        "bic": report.bic,
    }))
}

/// BIC over the default penalty grid for a simulated sample.
pub fn bic_path_json(n: usize, d: usize, m: f64, c: f64, starts: usize, seed: u64) -> Result<Value, String> {
    let sample = simulate(&design(n, d, m, c, seed)).map_err(|e| e.to_string())?;
    let sel = select_lambda_default(&sample.data, &FitConfig::new(K, L, 0.0).with_starts(starts).with_seed(seed)).map_err(|e| e.to_string())?;
    let table: Vec<Value> = sel
        .table
        .iter()
        .map(|r| json!({ "lambda": r.lambda, "loglik": r.loglik, "df": r.df, "bic": r.bic, "nonzeros": r.nonzeros }))
        .collect();
    Ok(json!({ "best_lambda": sel.best_lambda, "table": table }))
}

/// Logistic loss `-log pi(x)` and its quadratic upper bound touching at `y`,
/// sampled at `points` values of `x` in `[lo, hi]`.
pub fn bound_curve_json(y: f64, lo: f64, hi: f64, points: usize) -> Result<Value, String> {
    if !(lo < hi) || points < 2 || !y.is_finite() {
        return Err("need lo < hi, at least 2 points and a finite touch point".into());
    }
    let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let loss: Vec<f64> = xs.iter().map(|&x| -log_inverse_logit(x)).collect();
    let bound: Vec<f64> = xs.iter().map(|&x| logistic_bound(x, y)).collect();
    Ok(json!({ "x": xs, "loss": loss, "bound": bound, "y": y }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_and_fit(n: usize, d: usize, m: f64, c: f64, lambda: f64, starts: usize, seed: u32) -> Result<String, JsError> {
    to_js(simulate_and_fit_json(n, d, m, c, lambda, starts, seed.into()))
}

#[wasm_bindgen]
pub fn bic_path(n: usize, d: usize, m: f64, c: f64, starts: usize, seed: u32) -> Result<String, JsError> {
    to_js(bic_path_json(n, d, m, c, starts, seed.into()))
}

#[wasm_bindgen]
pub fn bound_curve(y: f64, lo: f64, hi: f64, points: usize) -> Result<String, JsError> {
    to_js(bound_curve_json(y, lo, hi, points))
}
