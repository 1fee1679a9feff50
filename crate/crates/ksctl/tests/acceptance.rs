//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use common::*;
use ks_control::adjoint::{duality_gap, solve_adjoint};
use ks_control::grid::{Field, Grid, SpaceTimeField};
use ks_control::hum_control::{solve_dual, ControlProblem};
use ks_control::ks_model::{solve_forward_pe, solve_forward_pp, solve_linearized, Control, ForwardOptions, KsParams};
use ks_control::weights::{build_eta0, refined_weights};
use ksctl::commands::{self, exit, Outcome};
use ksctl::config::ExperimentConfig;
use nalgebra::Vector2;
use serde_json::Value;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

const DUALITY_TOL: f64 = 1e-10;
const DUALITY_BUDGET_S: f64 = 60.0;
const MASS_TOL: f64 = 1e-11;
const STEADY_TOL: f64 = 1e-12;
const TIME_RATIO: (f64, f64) = (1.8, 2.2);
const SPACE_RATIO: (f64, f64) = (3.6, 4.4);
const CARLEMAN_BUDGET_S: f64 = 300.0;
const NULL_RATIO: f64 = 1e-3;
const LINEAR_BUDGET_S: f64 = 600.0;
const PICARD_MAX_ITER: usize = 20;
const UNIFORMITY_BOUND: f64 = 10.0;
const DENSE_TOL: f64 = 1e-8;

struct Ledger {
    failed: Vec<&'static str>,
}

impl Ledger {
    fn record(&mut self, id: &'static str, ok: bool, detail: String) {
        println!("{} {id} {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id);
        }
    }
}

fn run(command: &str, cfg: &ExperimentConfig) -> Outcome {
    assert!(cfg.violations().is_empty(), "{:?}", cfg.violations());
    commands::run(command, cfg).unwrap_or_else(|e| panic!("{command}: exit {} {}", e.code, e.message))
}

fn config(outdir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.io.outdir = outdir.to_path_buf();
    cfg
}

fn duality(l: &mut Ledger) {
    let clock = Instant::now();
    let mut rng = rng(2024);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in [24, 50] {
        for m in [40, 100] {
            let g = Grid::one_d(1.0, n, 1.0, m).unwrap();
            for eps in [1.0, 0.1, 0.01] {
                let p = KsParams::with_steady_state(1.0, 1.0, eps, 1.0).unwrap();
                for _ in 0..10 {
                    let mut ctl = Control::zero(&g, chi(&g));
                    ctl.g = smooth_spacetime(&g, &mut rng, false);
                    let h1 = smooth_spacetime(&g, &mut rng, true);
                    let h2 = smooth_spacetime(&g, &mut rng, false);
                    let tr = solve_linearized(
                        &p,
                        &g,
                        &smooth_field(&g, &mut rng, true),
                        &smooth_field(&g, &mut rng, false),
                        &ctl,
                        &h1,
                        &h2,
                    )
                    .unwrap();
                    let f1 = smooth_spacetime(&g, &mut rng, false);
                    let f2 = smooth_spacetime(&g, &mut rng, false);
                    let phi_t = smooth_field(&g, &mut rng, true);
                    let xi_t = smooth_field(&g, &mut rng, false);
                    let adj = solve_adjoint(&p, &g, &phi_t, &xi_t, &f1, &f2).unwrap();
                    worst = worst.max(duality_gap(&g, &tr, &adj, &ctl, &h1, &h2).unwrap().relative());
                    cases += 1;
                }
            }
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    l.record(
        "c1-duality-gap",
        worst < DUALITY_TOL && secs < DUALITY_BUDGET_S,
        format!("max relative gap {worst:.2e} < {DUALITY_TOL:e} over {cases} cases; {secs:.1}s < {DUALITY_BUDGET_S}s"),
    );
}

fn mass(l: &mut Ledger, runs: &Runs) {
    let mut drifts: Vec<(String, f64)> = Vec::new();
    let mut rng = rng(11);
    let g = Grid::one_d(1.0, 50, 2.0, 100).unwrap();
    for eps in [1.0, 0.1, 0.01] {
        let p = KsParams::with_steady_state(1.0, 1.0, eps, 1.0).unwrap();
        let u0: Field = smooth_field(&g, &mut rng, false).iter().map(|x| 1.0 + 0.3 * x).collect();
        let v0: Field = smooth_field(&g, &mut rng, false).iter().map(|x| 1.0 + 0.3 * x).collect();
        let mut ctl = Control::zero(&g, chi(&g));
        ctl.g = smooth_spacetime(&g, &mut rng, false);
        let opts = ForwardOptions::default();
        drifts.push((format!("pp eps={eps}"), solve_forward_pp(&p, &g, &u0, &v0, &ctl, &opts).unwrap().mass_drift(&g)));
        drifts.push((format!("pe eps={eps}"), solve_forward_pe(&p, &g, &u0, &ctl, &opts).unwrap().mass_drift(&g)));
        let h1 = smooth_spacetime(&g, &mut rng, true);
        let h2 = smooth_spacetime(&g, &mut rng, false);
        let lin = solve_linearized(&p, &g, &smooth_field(&g, &mut rng, true), &v0, &ctl, &h1, &h2).unwrap();
        drifts.push((format!("linearized eps={eps}"), lin.mass_drift(&g)));
    }
    for (k, v) in runs.simulate.summary["mass_drift"].as_object().unwrap() {
        drifts.push((format!("simulate {k}"), v.as_f64().unwrap()));
    }
    for (eps, o) in &runs.linear {
        drifts.push((format!("controlled eps={eps}"), o.summary["mass_drift"].as_f64().unwrap()));
    }
    for (eps, o) in &runs.nonlinear {
        drifts.push((format!("nonlinear controlled eps={eps}"), o.summary["mass_drift"].as_f64().unwrap()));
    }
    let (name, worst) = drifts.iter().fold((String::new(), 0.0), |acc, (n, d)| if *d >= acc.1 { (n.clone(), *d) } else { acc });
    l.record(
        "c2-mass-conservation",
        drifts.iter().all(|(_, d)| *d < MASS_TOL),
        format!("max relative drift {worst:.2e} ({name}) < {MASS_TOL:e} over {} solves", drifts.len()),
    );
}

fn steady_state(l: &mut Ledger) {
    let g = Grid::one_d(1.0, 50, 2.0, 200).unwrap();
    let mut worst: f64 = 0.0;
    for eps in [1.0, 0.1, 0.01] {
        let p = KsParams::with_steady_state(2.0, 1.0, eps, 1.5).unwrap();
        let u0 = vec![p.m1; g.node_count()];
        let v0 = vec![p.m2; g.node_count()];
        let ctl = Control::zero(&g, chi(&g));
        let opts = ForwardOptions::default();
        for tr in [
            solve_forward_pp(&p, &g, &u0, &v0, &ctl, &opts).unwrap(),
            solve_forward_pe(&p, &g, &u0, &ctl, &opts).unwrap(),
        ] {
            for k in 0..=g.steps() {
                for (u, v) in tr.u.slice(k).iter().zip(tr.v.slice(k)) {
                    worst = worst.max((u / p.m1 - 1.0).abs()).max((v / p.m2 - 1.0).abs());
                }
            }
        }
    }
    l.record(
        "c3-steady-state",
        worst < STEADY_TOL,
        format!("max relative deviation {worst:.2e} < {STEADY_TOL:e} over 200 steps, both steppers"),
    );
}

fn within(r: &[f64], band: (f64, f64)) -> bool {
    r.iter().all(|x| (band.0..=band.1).contains(x))
}

fn fmt(r: &[f64]) -> String {
    r.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",")
}

fn eigenmode(l: &mut Ledger) {
    let t = 0.5;
    let y0 = Vector2::new(1.0, 0.5);
    let mut rt = Vec::new();
    let n = 16;
    let mu = discrete_mu(1.0 / n as f64);
    for (eps, m0) in [(1.0, 100), (0.1, 800)] {
        let p = KsParams::with_steady_state(1.0, 1.0, eps, 1.0).unwrap();
        let fwd = (forward_generator(&p, mu) * t).exp() * y0;
        let adj = (adjoint_generator(&p, mu) * t).exp() * y0;
        let ms = [m0, 2 * m0, 4 * m0, 8 * m0];
        let ef: Vec<f64> = ms.iter().map(|&m| forward_mode_error(&p, n, m, t, false, fwd)).collect();
        let ea: Vec<f64> = ms.iter().map(|&m| adjoint_mode_error(&p, n, m, t, adj)).collect();
        rt.extend(ratios(&ef));
        rt.extend(ratios(&ea));
    }
    let m = 200;
    let p = KsParams::with_steady_state(1.0, 1.0, 0.5, 1.0).unwrap();
    let fwd = forward_recurrence(&p, PI * PI, m, t, y0);
    let adj = adjoint_recurrence(&p, PI * PI, m, t, y0);
    let ns = [8, 16, 32, 64];
    let ef: Vec<f64> = ns.iter().map(|&n| forward_mode_error(&p, n, m, t, false, fwd)).collect();
    let ea: Vec<f64> = ns.iter().map(|&n| adjoint_mode_error(&p, n, m, t, adj)).collect();
    let rs: Vec<f64> = ratios(&ef).into_iter().chain(ratios(&ea)).collect();
    l.record(
        "c4-eigenmode-order",
        within(&rt, TIME_RATIO) && within(&rs, SPACE_RATIO),
        format!(
            "dt-halving ratios [{}] in [{}, {}]; h-halving ratios [{}] in [{}, {}]",
            fmt(&rt),
            TIME_RATIO.0,
            TIME_RATIO.1,
            fmt(&rs),
            SPACE_RATIO.0,
            SPACE_RATIO.1
        ),
    );
}

fn carleman(l: &mut Ledger, o: &Outcome, cfg: &ExperimentConfig, secs: f64) {
    let s = &o.summary;
    let threshold = cfg.weights.sigma0 * (cfg.grid.t_final.powi(4) + cfg.grid.t_final.powi(8));
    let s_ok = s["s_list"].as_array().unwrap().iter().all(|x| x.as_f64().unwrap() >= threshold);
    let reports = s["reports"].as_array().unwrap();
    let mut detail = Vec::new();
    let mut ok = s_ok && o.code == exit::OK && secs < CARLEMAN_BUDGET_S;
    for id in ["thm2.2", "lem3.1", "lemA.1"] {
        let mine: Vec<&Value> = reports.iter().filter(|r| r["inequality"] == id).collect();
        let fals: u64 = mine.iter().map(|r| r["falsifications"].as_u64().unwrap()).sum();
        let cmax = mine
            .iter()
            .flat_map(|r| r["constants"].as_array().unwrap())
            .map(|c| c["c_emp"].as_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        ok &= fals == 0 && cmax.is_finite() && !mine.is_empty();
        detail.push(format!("{id}: {fals} falsified, max C_emp {cmax:.2e}"));
    }
    l.record(
        "c5-carleman",
        ok,
        format!(
            "{}; {} samples x {} s >= {threshold} x eps {:?}; {secs:.1}s < {CARLEMAN_BUDGET_S}s",
            detail.join("; "),
            cfg.carleman.samples,
            cfg.carleman.s_factors.len(),
            cfg.carleman.eps_list
        ),
    );
}

fn linear(l: &mut Ledger, runs: &Runs) {
    let mut ok = runs.linear_secs < LINEAR_BUDGET_S;
    let mut detail = Vec::new();
    for (eps, o) in &runs.linear {
        let s = &o.summary;
        let ratio = s["terminal_ratio"].as_f64().unwrap();
        let scan: Vec<f64> = s["tau_scan"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["terminal_u"].as_f64().unwrap())
            .collect();
        let decreasing = scan.len() == 3 && scan.windows(2).all(|w| w[1] < w[0]);
        ok &= o.code == exit::OK && ratio <= NULL_RATIO && decreasing;
        detail.push(format!(
            "eps={eps}: |u(T)|/|u_free(T)| {ratio:.2e}, tau scan [{}]",
            scan.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(",")
        ));
    }
    l.record(
        "c6-linear-null-control",
        ok,
        format!(
            "{}; ratio <= {NULL_RATIO:e}, strictly decreasing in tau; {:.1}s < {LINEAR_BUDGET_S}s",
            detail.join("; "),
            runs.linear_secs
        ),
    );
}

fn picard(l: &mut Ledger, runs: &Runs, cfg: &ExperimentConfig) {
    let bound = 2.0 * cfg.solver.tol;
    let mut ok = true;
    let mut detail = Vec::new();
    for (eps, o) in &runs.nonlinear {
        let it = o.summary["iterations"].as_u64().unwrap() as usize;
        let ver = o.summary["verification"].as_f64().unwrap();
        ok &= o.code == exit::OK && it <= PICARD_MAX_ITER && ver <= bound;
        detail.push(format!("eps={eps}: {it} it, verification {ver:.2e}"));
    }
    l.record(
        "c7-picard",
        ok,
        format!("delta={}; {}; <= {PICARD_MAX_ITER} it, verification <= {bound:e}", cfg.data.delta, detail.join("; ")),
    );
}

fn sweep(l: &mut Ledger, o: &Outcome) {
    let r = o.summary["uniformity_ratio"].as_f64().unwrap_or(f64::INFINITY);
    let excluded = o.summary["excluded"].as_array().unwrap().len();
    l.record(
        "c8-eps-uniformity",
        o.code == exit::OK && excluded == 0 && r <= UNIFORMITY_BOUND,
        format!("max|g|/min|g| = {r:.3} <= {UNIFORMITY_BOUND}, {excluded} eps excluded"),
    );
}

fn dense(l: &mut Ledger, cfg: &ExperimentConfig) {
    let g = Grid::one_d(1.0, 24, cfg.grid.t_final, 40).unwrap();
    let eta = build_eta0(&g, regions(), cfg.weights.eta_amplitude).unwrap();
    let weights = refined_weights(&eta, &cfg.weight_params().unwrap(), &g);
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for eps in [1.0, 0.1] {
        let pb = ControlProblem {
            params: KsParams::with_steady_state(1.0, 1.0, eps, 1.0).unwrap(),
            grid: g.clone(),
            weights: weights.clone(),
            chi: chi(&g),
            z0: g.sample(|[x, _]| 0.01 * (PI * x).cos()),
            w0: g.sample(|[x, _]| 0.005 * (2.0 * PI * x).cos()),
            h1: SpaceTimeField::zeros(&g),
            h2: SpaceTimeField::zeros(&g),
            tau: 1e-6,
            tol: 1e-14,
            max_iter: 20000,
        };
        let dual = solve_dual(&pb).unwrap();
        let rel = dense_dual_distance(&pb, &dual);
        worst = worst.max(rel);
        detail.push(format!("eps={eps}: {rel:.2e} ({} CG it)", dual.iterations));
    }
    l.record("c9-cg-vs-dense", worst < DENSE_TOL, format!("n=24 m=40 {}; < {DENSE_TOL:e}", detail.join("; ")));
}

fn csv_bytes(o: &Outcome) -> (String, Vec<u8>) {
    let p = o.outputs.iter().find(|p| p.extension().is_some_and(|e| e == "csv")).unwrap();
    (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap())
}

fn determinism(l: &mut Ledger, first: &[(&'static str, Outcome)]) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    // Second pass on a single worker thread.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut same = 0;
    let mut differ = Vec::new();
    for (command, a) in first {
        let b = pool.install(|| run(command, &cfg));
        if csv_bytes(a) == csv_bytes(&b) {
            same += 1;
        } else {
            differ.push(*command);
        }
    }
    l.record(
        "c10-byte-identical-csv",
        differ.is_empty(),
        format!("{same}/{} command CSVs identical across runs and thread counts; differing: {differ:?}", first.len()),
    );
}

struct Runs {
    simulate: Outcome,
    linear: Vec<(f64, Outcome)>,
    linear_secs: f64,
    nonlinear: Vec<(f64, Outcome)>,
}

fn main() {
    let mut l = Ledger { failed: Vec::new() };
    let dir = tempfile::tempdir().unwrap();
    let base = config(dir.path());

    duality(&mut l);
    steady_state(&mut l);
    eigenmode(&mut l);

    let clock = Instant::now();
    let carleman_run = run("carleman", &base);
    carleman(&mut l, &carleman_run, &base, clock.elapsed().as_secs_f64());

    let simulate = run("simulate", &base);
    let clock = Instant::now();
    let linear_runs: Vec<(f64, Outcome)> = [1.0, 0.1, 0.01]
        .into_iter()
        .map(|eps| {
            let mut cfg = config(dir.path());
            cfg.physics.eps = eps;
            (eps, run("control-linear", &cfg))
        })
        .collect();
    let linear_secs = clock.elapsed().as_secs_f64();
    let nonlinear: Vec<(f64, Outcome)> = base
        .physics
        .eps_list
        .iter()
        .map(|&eps| {
            let mut cfg = config(dir.path());
            cfg.physics.eps = eps;
            (eps, run("control-nonlinear", &cfg))
        })
        .collect();
    let runs = Runs {
        simulate,
        linear: linear_runs,
        linear_secs,
        nonlinear,
    };
    mass(&mut l, &runs);
    linear(&mut l, &runs);
    picard(&mut l, &runs, &base);
    let sweep_run = run("eps-sweep", &base);
    sweep(&mut l, &sweep_run);
    dense(&mut l, &base);

    let default_eps = base.physics.eps;
    let linear_default = runs.linear.into_iter().find(|(e, _)| *e == default_eps).unwrap().1;
    let nonlinear_default = runs.nonlinear.into_iter().find(|(e, _)| *e == default_eps).unwrap().1;
    let first = [
        ("simulate", runs.simulate),
        ("carleman", carleman_run),
        ("control-linear", linear_default),
        ("control-nonlinear", nonlinear_default),
        ("eps-sweep", sweep_run),
    ];
    determinism(&mut l, &first);

    if l.failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed {:?}", l.failed);
        std::process::exit(1);
    }
}
