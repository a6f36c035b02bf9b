//! Browser bindings for the demo page. Each export takes plain numbers and
//! strings and returns a JSON document for the page to plot.

use nlbehavior::config::KernelSpec;
use nlbehavior::interp::{build_regressors, fit_min_norm, InterpOptions};
use nlbehavior::kernels::{FeatureMap, OperatorKernel};
use nlbehavior::linalg::RankPolicy;
use nlbehavior::subspace::{build_past_future, membership_test, recover_states, SubspaceOptions};
use nlbehavior::systems::catalog::{catalog_model, Model};
use nlbehavior::systems::{seeded_rng, simulate_ss, uniform_inputs, StateSpaceModel};
use nlbehavior::{Error, Result};
use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn state_space(name: &str) -> Result<StateSpaceModel> {
    match catalog_model(name)? {
        Model::StateSpace(m) => Ok(m),
        Model::Ar(_) => Err(Error::Config {
            key: "model".into(),
            msg: format!("`{name}` is not a state-space model"),
        }),
    }
}

fn first(v: &[nlbehavior::linalg::Vector]) -> Vec<f64> {
    v.iter().map(|x| x[0]).collect()
}

#[derive(Serialize)]
struct Identification {
    u: Vec<f64>,
    y: Vec<f64>,
    singular_values: Vec<f64>,
    order: usize,
    true_order: usize,
}

/// Simulates a catalog state-space model and identifies its order from the
/// singular values of the oblique projection.
pub fn identify(model: &str, horizon: usize, seed: u32, lag: usize) -> Result<String> {
    let m = state_space(model)?;
    let u = uniform_inputs(&mut seeded_rng(seed.into()), m.input_dim(), horizon);
    let (traj, _) = simulate_ss(&m, &u)?;
    let kernel = OperatorKernel::rank_one(m.nonlinearity.state_map().clone());
    let data = build_past_future(&traj, lag, &kernel)?;
    let result = recover_states(&data, None, RankPolicy::default())?;
    Ok(serde_json::to_string(&Identification {
        u: first(&traj.u),
        y: first(&traj.y),
        singular_values: result.singular_values,
        order: result.order,
        true_order: m.state_dim(),
    })?)
}

#[derive(Serialize)]
struct Interpolation {
    t: Vec<usize>,
    actual: Vec<f64>,
    predicted: Vec<f64>,
    sigma_max: Vec<f64>,
    classification: Vec<&'static str>,
    train: usize,
}

/// Fits the minimum-norm interpolant on the first `train` regression samples
/// and predicts the rest, with the error certificate at every query.
pub fn interpolate(model: &str, horizon: usize, seed: u32, lag: usize, kernel: &str, train: usize) -> Result<String> {
    let m = catalog_model(model)?;
    let u = uniform_inputs(&mut seeded_rng(seed.into()), m.input_dim(), horizon);
    let traj = m.simulate(&u)?;
    let spec: KernelSpec = serde_json::from_str(kernel).map_err(|e| Error::Config {
        key: "kernel".into(),
        msg: e.to_string(),
    })?;
    let k = spec.interp_kernel(traj.input_dim(), traj.output_dim(), lag)?;
    let samples = build_regressors(&traj, lag)?;
    if train == 0 || train >= samples.len() {
        return Err(Error::Config {
            key: "train".into(),
            msg: format!("must lie in 1..{}", samples.len()),
        });
    }
    let f = fit_min_norm(&samples[..train], &k, InterpOptions::default())?;
    let mut out = Interpolation {
        t: Vec::new(),
        actual: Vec::new(),
        predicted: Vec::new(),
        sigma_max: Vec::new(),
        classification: Vec::new(),
        train,
    };
    for s in &samples[train..] {
        let cert = f.certificate(&s.z)?;
        out.t.push(s.t + lag);
        out.actual.push(s.y_plus[0]);
        out.predicted.push(f.predict(&s.z)?[0]);
        out.sigma_max.push(cert.lambda_max);
        out.classification.push(cert.classification.as_str());
    }
    Ok(serde_json::to_string(&out)?)
}

#[derive(Serialize)]
struct SweepPoint {
    scale: f64,
    past_residual: f64,
    future_residual: f64,
    feasible: bool,
}

/// Membership residuals of a fresh trajectory whose outputs are perturbed by
/// `scale * RMS(y)` at one random time, for log-spaced scales.
pub fn membership_sweep(model: &str, seed: u32, lag: usize, steps: usize) -> Result<String> {
    let m = state_space(model)?;
    let mut rng = seeded_rng(seed.into());
    let (traj, _) = simulate_ss(&m, &uniform_inputs(&mut rng, m.input_dim(), 200))?;
    let kernel = OperatorKernel::rank_one(match m.nonlinearity.state_map() {
        FeatureMap::Table(_) => return Err(Error::Config { key: "model".into(), msg: "tabulated maps are not supported".into() }),
        map => map.clone(),
    });
    let data = build_past_future(&traj, lag, &kernel)?;
    let x0 = nlbehavior::linalg::Vector::from_fn(m.state_dim(), |_, _| rng.random_range(-1.0..1.0));
    let (cand, _) = simulate_ss(&m.with_initial_state(x0)?, &uniform_inputs(&mut rng, m.input_dim(), 2 * lag))?;
    let rms = (traj.y.iter().map(|y| y.norm_squared()).sum::<f64>() / traj.len() as f64).sqrt();
    let k = rng.random_range(0..2 * lag);
    let mut points = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        // 0 first, then 1e-10 .. 1
        let scale = if i == 0 { 0.0 } else { 10f64.powf(-10.0 + 10.0 * (i - 1) as f64 / (steps.max(2) - 1) as f64) };
        let mut c = cand.clone();
        c.y[k][0] += scale * rms;
        let v = membership_test(&data, &c, SubspaceOptions::default())?;
        points.push(SweepPoint {
            scale,
            past_residual: v.past_residual,
            future_residual: v.future_residual,
            feasible: v.feasible,
        });
    }
    Ok(serde_json::to_string(&points)?)
}

fn js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = identify)]
pub fn identify_js(model: &str, horizon: usize, seed: u32, lag: usize) -> std::result::Result<String, JsValue> {
    js(identify(model, horizon, seed, lag))
}

#[wasm_bindgen(js_name = interpolate)]
pub fn interpolate_js(
    model: &str,
    horizon: usize,
    seed: u32,
    lag: usize,
    kernel: &str,
    train: usize,
) -> std::result::Result<String, JsValue> {
    js(interpolate(model, horizon, seed, lag, kernel, train))
}

#[wasm_bindgen(js_name = membershipSweep)]
pub fn membership_sweep_js(model: &str, seed: u32, lag: usize, steps: usize) -> std::result::Result<String, JsValue> {
    js(membership_sweep(model, seed, lag, steps))
}
