//! Browser bindings: κ rows, `S(α)` and brute-force counts.
//!
//! Each export takes plain strings and numbers and returns a JSON string, so
//! the page needs no generated TypeScript types.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use wcl_core::arith;
use wcl_core::counter::{self, Region};
use wcl_core::expsums::{self, ExpSumConfig};
use wcl_core::{QuadraticForm, WeightModel};

/// Work cap for in-browser enumeration, well below the native default.
pub const WEB_CAP: u128 = 50_000_000;

fn model(spec: &str) -> Result<WeightModel, String> {
    if spec.trim_start().starts_with("custom") {
        return Err("custom weights need a file and are not available here".into());
    }
    WeightModel::parse(spec).map_err(|e| e.to_string())
}

fn form(json: &str) -> Result<QuadraticForm, String> {
    QuadraticForm::from_json(json).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[derive(Serialize)]
struct KappaRow {
    model: String,
    q: u64,
    kappa: Vec<String>,
    decimal: Vec<f64>,
}

/// `κ(q, h)` for `h = 0..q` as exact `"p/q"` strings and decimals.
pub fn kappa_json(weights: &str, q: u64) -> Result<String, String> {
    let m = model(weights)?;
    let row = m.kappa_row(q).map_err(|e| e.to_string())?;
    Ok(to_json(&KappaRow {
        model: m.name(),
        q,
        kappa: row.iter().map(arith::format_rational).collect(),
        decimal: row.iter().map(arith::rational_to_f64).collect(),
    }))
}

#[derive(Serialize)]
struct SAlpha {
    re: f64,
    im: f64,
    abs: f64,
    cumulative: f64,
}

/// `S(α)` over `0 ≤ x_i ≤ X`, with `A(X)` for normalizing.
pub fn s_alpha_json(form_json: &str, weights: &str, x: f64, alpha: f64) -> Result<String, String> {
    let f = form(form_json)?;
    let m = model(weights)?;
    let cfg = ExpSumConfig {
        alpha_cap: WEB_CAP,
        ..ExpSumConfig::default()
    };
    let z = expsums::s_alpha(&f, &m, x, alpha, &cfg).map_err(|e| e.to_string())?;
    Ok(to_json(&SAlpha {
        re: z.re,
        im: z.im,
        abs: z.norm(),
        cumulative: m.cumulative(x),
    }))
}

/// Weighted number of `0 ≤ x_i ≤ X` with `f(x) = t`.
pub fn count_json(form_json: &str, weights: &str, x: u64) -> Result<String, String> {
    let f = form(form_json)?;
    let m = model(weights)?;
    let c = counter::brute_count(&f, &m, x, &Region::Cube, WEB_CAP).map_err(|e| e.to_string())?;
    Ok(to_json(&c))
}

#[wasm_bindgen]
pub fn kappa(weights: &str, q: u32) -> Result<String, JsError> {
    kappa_json(weights, q as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn s_alpha(form_json: &str, weights: &str, x: f64, alpha: f64) -> Result<String, JsError> {
    s_alpha_json(form_json, weights, x, alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn count(form_json: &str, weights: &str, x: u32) -> Result<String, JsError> {
    count_json(form_json, weights, x as u64).map_err(|e| JsError::new(&e))
}
