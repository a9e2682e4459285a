//! Browser demo: sample paths of the three schemes on one Wiener path, a
//! strong-convergence curve, and the Euler-Maruyama domain-violation census.
//!
//! The computations live in [`demo`] and return plain serializable structs;
//! the `wasm_bindgen` exports hand them to JavaScript as JSON strings.

use wasm_bindgen::prelude::*;

pub mod demo;

fn to_json<T: serde::Serialize>(r: sis_sde::Result<T>) -> Result<String, JsError> {
    match r {
        Ok(v) => serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())),
        Err(e) => Err(JsError::new(&e.to_string())),
    }
}

/// Trajectories of `em`, `gy` and `sd` driven by path `path` of `seed`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn sample_paths(
    beta: f64,
    gamma: f64,
    b: f64,
    k: f64,
    sigma: f64,
    i0: f64,
    horizon: f64,
    dt: f64,
    seed: u32,
    path: u32,
) -> Result<String, JsError> {
    to_json(demo::Model::new(beta, gamma, b, k, sigma, i0).and_then(|m| m.sample_paths(horizon, dt, seed as u64, path as u64)))
}

/// Strong error of `scheme` (`em`, `gy` or `sd`) at `dt = T / 2^k`, `k` in
/// `k_min..=k_max`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn convergence_curve(
    beta: f64,
    gamma: f64,
    b: f64,
    k: f64,
    sigma: f64,
    i0: f64,
    horizon: f64,
    scheme: &str,
    k_min: u32,
    k_max: u32,
    n_paths: u32,
    seed: u32,
) -> Result<String, JsError> {
    to_json(demo::Model::new(beta, gamma, b, k, sigma, i0).and_then(|m| {
        m.convergence_curve(horizon, scheme, k_min, k_max, n_paths as usize, seed as u64)
    }))
}

/// Fraction of paths leaving `(0, K)` per scheme for each step in `dt_list`
/// (comma-separated).
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn violation_census(
    beta: f64,
    gamma: f64,
    b: f64,
    k: f64,
    sigma: f64,
    i0: f64,
    horizon: f64,
    dt_list: &str,
    n_paths: u32,
    seed: u32,
) -> Result<String, JsError> {
    to_json(demo::Model::new(beta, gamma, b, k, sigma, i0).and_then(|m| {
        let steps = demo::parse_list(dt_list)?;
        m.violation_census(horizon, &steps, n_paths as usize, seed as u64)
    }))
}
