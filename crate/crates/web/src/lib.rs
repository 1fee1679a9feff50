//! wasm-bindgen entry points for the browser demo in `www/`.
//!
//! Every function returns a flat `Float64Array`; the layouts are documented
//! per function. Errors come back as JS exceptions carrying the message.

use ks_control::grid::{self, Grid, SpaceTimeField};
use ks_control::hum_control::{solve_control, ControlProblem};
use ks_control::ks_model::{build_cutoff, solve_forward_pp, Control, ForwardOptions, KsParams};
use ks_control::weights::{build_eta0, carleman_weights, refined_weights, ControlRegions, Subdomain, WeightFamily, WeightKind, WeightParams};
use std::f64::consts::PI;
use wasm_bindgen::prelude::*;

const T_FINAL: f64 = 2.0;
const LAMBDA: f64 = 1.5;
const ETA_AMPLITUDE: f64 = 0.01;

fn regions() -> ControlRegions {
    ControlRegions {
        omega0: Subdomain::interval(0.3, 0.4),
        omega_prime: Subdomain::interval(0.25, 0.45),
        omega: Subdomain::interval(0.2, 0.5),
    }
}

fn err(e: ks_control::Error) -> String {
    e.to_string()
}

/// Uncontrolled nonlinear run from `(M1 + delta cos(pi x), M1)` with `a = b = 1`.
///
/// Layout: `[u(x_i, t_k)]` row-major by level, `(m + 1) * (n + 1)` entries.
pub fn simulate_run(eps: f64, m1: f64, delta: f64, n: usize, m: usize) -> Result<Vec<f64>, String> {
    let g = Grid::one_d(1.0, n, T_FINAL, m).map_err(err)?;
    let p = KsParams::with_steady_state(1.0, 1.0, eps, m1).map_err(err)?;
    let u0 = g.sample(|[x, _]| m1 + delta * (PI * x).cos());
    let v0 = vec![p.m2; g.node_count()];
    let ctl = Control::zero(&g, build_cutoff(&g, &regions()).map_err(err)?);
    let tr = solve_forward_pp(&p, &g, &u0, &v0, &ctl, &ForwardOptions::default()).map_err(err)?;
    Ok(tr.u.as_slice().to_vec())
}

/// `log10(e^{2 s alpha} phi^3)` on the space-time grid with `s = factor * s0`.
///
/// Layout as [`simulate_run`]; the singular end levels hold NaN.
pub fn weight_map(s_factor: f64, n: usize, m: usize) -> Result<Vec<f64>, String> {
    let g = Grid::one_d(1.0, n, T_FINAL, m).map_err(err)?;
    let eta = build_eta0(&g, regions(), ETA_AMPLITUDE).map_err(err)?;
    let base = WeightParams::from_sigma(1.0, LAMBDA, T_FINAL).map_err(err)?;
    let p = WeightParams::new(s_factor * base.s, LAMBDA, T_FINAL).map_err(err)?;
    let w = carleman_weights(&eta, &p, &g);
    let mut out = Vec::with_capacity(g.node_count() * (m + 1));
    for k in 0..=m {
        for i in 0..g.node_count() {
            let l = w.log_weight_scaled(WeightKind::Pointwise, 2.0, 3.0, i, k);
            out.push(if l.is_finite() { l / std::f64::consts::LN_10 } else { f64::NAN });
        }
    }
    Ok(out)
}

/// Linearized null control of `z0 = amplitude cos(pi x)`.
///
/// Layout: three blocks of `m + 1` values, `|z(t_k)|` free, `|z(t_k)|`
/// controlled and `|g(t_k)|`, followed by the CG iteration count.
pub fn control_run(eps: f64, tau: f64, amplitude: f64, n: usize, m: usize) -> Result<Vec<f64>, String> {
    let g = Grid::one_d(1.0, n, T_FINAL, m).map_err(err)?;
    let eta = build_eta0(&g, regions(), ETA_AMPLITUDE).map_err(err)?;
    let pb = ControlProblem {
        params: KsParams::with_steady_state(1.0, 1.0, eps, 1.0).map_err(err)?,
        weights: refined_weights(&eta, &WeightParams::from_sigma(1.0, LAMBDA, T_FINAL).map_err(err)?, &g),
        chi: build_cutoff(&g, &regions()).map_err(err)?,
        z0: g.sample(|[x, _]| amplitude * (PI * x).cos()),
        w0: g.zeros(),
        h1: SpaceTimeField::zeros(&g),
        h2: SpaceTimeField::zeros(&g),
        tau,
        tol: 1e-10,
        max_iter: 5000,
        grid: g.clone(),
    };
    let (dual, res) = solve_control(&pb).map_err(err)?;
    let norms = |f: &SpaceTimeField| (0..=m).map(|k| grid::l2_norm(f.slice(k), &g)).collect::<Vec<_>>();
    let mut out = norms(&res.free.u);
    out.extend(norms(&res.state.u));
    out.extend(norms(&res.control.g));
    out.push(dual.iterations as f64);
    Ok(out)
}

#[wasm_bindgen]
pub fn simulate(eps: f64, m1: f64, delta: f64, n: usize, m: usize) -> Result<Vec<f64>, JsError> {
    simulate_run(eps, m1, delta, n, m).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn weights(s_factor: f64, n: usize, m: usize) -> Result<Vec<f64>, JsError> {
    weight_map(s_factor, n, m).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn control(eps: f64, tau: f64, amplitude: f64, n: usize, m: usize) -> Result<Vec<f64>, JsError> {
    control_run(eps, tau, amplitude, n, m).map_err(|e| JsError::new(&e))
}
