//! The five experiment commands.

use crate::config::ExperimentConfig;
use crate::output::{config_hash, write_outputs, RunRecord, Table};
use ks_control::carleman_check::{
    adjoint_samples, heat_samples, lemma31_report, lemma_a1_report, theorem22_report, CarlemanReport,
};
use ks_control::grid::{self, Field, Grid, SpaceTimeField};
use ks_control::hum_control::{control_h1_norm, h1_norm_sq, solve_control, ControlProblem};
use ks_control::ks_model::{
    build_cutoff, solve_forward_pe, solve_forward_pp, solve_linearized, Control, ForwardOptions, StateTrajectory,
};
use ks_control::nonlinear_control::{eps_sweep, picard_solve, ControlSetup, ENorm, PicardOptions, PicardStatus};
use ks_control::weights::{build_eta0, refined_weights};
use ks_control::Error;
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

pub const COMMANDS: [&str; 5] = ["simulate", "carleman", "control-linear", "control-nonlinear", "eps-sweep"];

/// Relative mass drift tolerated in any forward solve.
pub const MASS_DRIFT_TOL: f64 = 1e-11;
/// Bound on `max |g| / min |g|` reported by `eps-sweep`.
pub const UNIFORMITY_BOUND: f64 = 10.0;

pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NON_CONVERGENCE: i32 = 2;
    pub const FALSIFIED: i32 = 3;
}

#[derive(Debug)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonConvergence { .. } | Error::BlowUp { .. } | Error::LinearSolver(_) => exit::NON_CONVERGENCE,
            Error::Indefinite { .. } | Error::CrossValidation { .. } | Error::Verification { .. } => exit::FALSIFIED,
            _ => exit::CONFIG,
        };
        CommandError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError {
            code: exit::CONFIG,
            message: format!("output: {e}"),
        }
    }
}

/// Result of a completed command: the exit code (0, 2 or 3), written files
/// and warnings for stderr.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    command: &'a str,
    timings: Vec<(String, f64)>,
    clock: Instant,
    warnings: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a ExperimentConfig, command: &'a str) -> Self {
        Self {
            cfg,
            command,
            timings: Vec::new(),
            clock: Instant::now(),
            warnings: Vec::new(),
        }
    }

    fn lap(&mut self, phase: &str) {
        self.timings.push((phase.to_string(), self.clock.elapsed().as_secs_f64()));
        self.clock = Instant::now();
    }

    fn finish(mut self, code: i32, table: Table, summary: serde_json::Value) -> Result<Outcome, CommandError> {
        self.lap("solve");
        let mut record = RunRecord {
            command: self.command,
            hash: config_hash(self.cfg),
            exit_code: code,
            config: self.cfg,
            timings: self.timings,
            outputs: Vec::new(),
            summary: summary.clone(),
        };
        let outputs = write_outputs(&self.cfg.io, &mut record, &table)?;
        Ok(Outcome {
            code,
            outputs,
            warnings: self.warnings,
            summary,
        })
    }
}

pub fn run(command: &str, cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    match command {
        "simulate" => simulate(cfg),
        "carleman" => carleman(cfg),
        "control-linear" => control_linear(cfg),
        "control-nonlinear" => control_nonlinear(cfg),
        "eps-sweep" => sweep(cfg),
        other => Err(CommandError {
            code: exit::CONFIG,
            message: format!("unknown command '{other}'"),
        }),
    }
}

/// `amplitude * prod_a cos(k_a pi x_a / L_a)`.
fn mode_field(cfg: &ExperimentConfig, g: &Grid, amplitude: f64) -> Field {
    let k = cfg.mode();
    let l = g.lengths().to_vec();
    g.sample(|x| {
        let mut v = amplitude * (k[0] as f64 * std::f64::consts::PI * x[0] / l[0]).cos();
        if g.dim() == 2 {
            v *= (k[1] as f64 * std::f64::consts::PI * x[1] / l[1]).cos();
        }
        v
    })
}

fn level_norms(tr: &StateTrajectory, g: &Grid, shift: (f64, f64), k: usize) -> (f64, f64) {
    let du: Field = tr.u.slice(k).iter().map(|u| u - shift.0).collect();
    let dv: Field = tr.v.slice(k).iter().map(|v| v - shift.1).collect();
    (grid::l2_norm(&du, g), grid::l2_norm(&dv, g))
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let mut run = Run::new(cfg, "simulate");
    let g = cfg.build_grid()?;
    let p = cfg.params(cfg.physics.eps)?;
    let chi = build_cutoff(&g, &cfg.regions())?;
    let pert = mode_field(cfg, &g, cfg.data.delta);
    let u0: Field = pert.iter().map(|x| p.m1 + x).collect();
    let v0 = vec![p.m2; g.node_count()];
    let ctl = Control::zero(&g, chi);
    let opts = ForwardOptions {
        blowup_cap: cfg.solver.blowup_cap,
    };
    run.lap("setup");
    let pp = solve_forward_pp(&p, &g, &u0, &v0, &ctl, &opts)?;
    let pe = solve_forward_pe(&p, &g, &u0, &ctl, &opts)?;
    let zero = SpaceTimeField::zeros(&g);
    let lin = solve_linearized(&p, &g, &pert, &vec![0.0; g.node_count()], &ctl, &zero, &zero)?;

    let mut table = Table::new(&["solver", "step", "t", "mass_u", "min_u", "max_u", "dev_u", "dev_v"]);
    let mut drifts = serde_json::Map::new();
    let mut code = exit::OK;
    for (name, tr, shift) in [("pp", &pp, (p.m1, p.m2)), ("pe", &pe, (p.m1, p.m2)), ("linearized", &lin, (0.0, 0.0))] {
        for k in 0..=g.steps() {
            let u = tr.u.slice(k);
            let (du, dv) = level_norms(tr, &g, shift, k);
            let mass = grid::mass(u, &g)?;
            let min = u.iter().copied().fold(f64::INFINITY, f64::min);
            let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            table.push(vec![name.into(), k.into(), g.time(k).into(), mass.into(), min.into(), max.into(), du.into(), dv.into()]);
        }
        let drift = tr.mass_drift(&g);
        if drift > MASS_DRIFT_TOL {
            run.warnings.push(format!("{name}: mass drift {drift:e} exceeds {MASS_DRIFT_TOL:e}"));
            code = exit::FALSIFIED;
        }
        drifts.insert(name.to_string(), json!(drift));
    }
    let (tu, tv) = level_norms(&pp, &g, (p.m1, p.m2), g.steps());
    let summary = json!({
        "eps": p.eps,
        "mass_drift": drifts,
        "mass_drift_tol": MASS_DRIFT_TOL,
        "terminal_deviation_pp": [tu, tv],
        "min_u_pp": pp.min_u(),
    });
    run.finish(code, table, summary)
}

fn report_rows(table: &mut Table, rep: &CarlemanReport) {
    for r in &rep.rows {
        table.push(vec![
            rep.inequality.id().into(),
            r.sample_id.into(),
            r.s.into(),
            rep.lambda.into(),
            rep.eps.into(),
            r.lhs().into(),
            r.rhs().into(),
            r.ratio().into(),
            r.log_lhs.into(),
            r.log_rhs.into(),
        ]);
    }
}

fn report_summary(rep: &CarlemanReport) -> serde_json::Value {
    json!({
        "inequality": rep.inequality.id(),
        "eps": rep.eps,
        "lambda": rep.lambda,
        "constants": rep.constants().iter().map(|(s, c)| json!({"s": s, "c_emp": c})).collect::<Vec<_>>(),
        "falsifications": rep.falsifications(),
    })
}

fn carleman(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let mut run = Run::new(cfg, "carleman");
    let g = cfg.build_grid()?;
    let regions = cfg.regions();
    let eta = build_eta0(&g, regions, cfg.weights.eta_amplitude)?;
    let chi = build_cutoff(&g, &regions)?;
    let base = cfg.base_s();
    let s_list: Vec<f64> = cfg.carleman.s_factors.iter().map(|f| f * base).collect();
    let lambda = cfg.weights.lambda;
    let (n, seed) = (cfg.carleman.samples, cfg.carleman.seed);
    run.lap("setup");

    let mut reports = Vec::new();
    for &eps in &cfg.carleman.eps_list {
        let p = cfg.params(eps)?;
        let samples = adjoint_samples(&p, &g, n, seed)?;
        let warned = samples.iter().filter(|a| a.projection_warning()).count();
        if warned > 0 {
            run.warnings.push(format!("eps {eps}: {warned} terminal data projected onto zero mass"));
        }
        reports.push(theorem22_report(&p, &g, &eta, &samples, &s_list, lambda)?);
        reports.push(lemma31_report(&p, &g, &eta, &chi, &samples, &s_list, lambda)?);
    }
    reports.push(lemma_a1_report(&g, &eta, &heat_samples(&g, n, seed)?, &s_list, lambda)?);

    let mut table = Table::new(&[
        "inequality", "sample_id", "s", "lambda", "eps", "lhs", "rhs", "ratio", "log_lhs", "log_rhs",
    ]);
    let mut falsified = 0;
    for rep in &reports {
        report_rows(&mut table, rep);
        falsified += rep.falsifications();
    }
    if falsified > 0 {
        run.warnings.push(format!("{falsified} falsification event(s)"));
    }
    let summary = json!({
        "s_threshold": base,
        "s_list": s_list,
        "samples": n,
        "falsifications": falsified,
        "reports": reports.iter().map(report_summary).collect::<Vec<_>>(),
    });
    run.finish(if falsified > 0 { exit::FALSIFIED } else { exit::OK }, table, summary)
}

fn linear_problem(cfg: &ExperimentConfig, g: &Grid, eps: f64, tau: f64) -> Result<ControlProblem, CommandError> {
    let regions = cfg.regions();
    let eta = build_eta0(g, regions, cfg.weights.eta_amplitude)?;
    Ok(ControlProblem {
        params: cfg.params(eps)?,
        grid: g.clone(),
        weights: refined_weights(&eta, &cfg.weight_params()?, g),
        chi: build_cutoff(g, &regions)?,
        z0: mode_field(cfg, g, cfg.data.z0_amplitude),
        w0: g.zeros(),
        h1: SpaceTimeField::zeros(g),
        h2: SpaceTimeField::zeros(g),
        tau,
        tol: cfg.solver.cg_tol,
        max_iter: cfg.solver.cg_max_iter,
    })
}

fn control_linear(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let mut run = Run::new(cfg, "control-linear");
    let g = cfg.build_grid()?;
    let pb = linear_problem(cfg, &g, cfg.physics.eps, cfg.solver.tau)?;
    run.lap("setup");
    let (dual, res) = solve_control(&pb)?;
    run.lap("control");

    // Penalty scan: terminal norm must not grow as tau decreases.
    let mut scan: Vec<f64> = cfg.solver.tau_scan.clone();
    scan.sort_by(|a, b| b.partial_cmp(a).unwrap());
    scan.dedup();
    let mut scan_rows = Vec::new();
    for &tau in &scan {
        let r = if tau == cfg.solver.tau {
            (res.terminal_u, dual.iterations)
        } else {
            let (d, r) = solve_control(&linear_problem(cfg, &g, cfg.physics.eps, tau)?)?;
            (r.terminal_u, d.iterations)
        };
        scan_rows.push(json!({"tau": tau, "terminal_u": r.0, "cg_iterations": r.1}));
    }
    let terminals: Vec<f64> = scan_rows.iter().map(|r| r["terminal_u"].as_f64().unwrap_or(f64::NAN)).collect();
    let monotone = terminals.windows(2).all(|w| w[1] <= w[0]);
    let mut code = exit::OK;
    if !monotone {
        run.warnings.push(format!("terminal norm not monotone in tau: {terminals:?}"));
        code = exit::FALSIFIED;
    }
    let drift = res.state.mass_drift(&g);
    if drift > MASS_DRIFT_TOL {
        run.warnings.push(format!("controlled state: mass drift {drift:e}"));
        code = exit::FALSIFIED;
    }

    let mut table = Table::new(&["step", "t", "u_l2", "v_l2", "free_u_l2", "free_v_l2", "g_l2", "g_h1"]);
    for k in 0..=g.steps() {
        let (u, v) = level_norms(&res.state, &g, (0.0, 0.0), k);
        let (fu, fv) = level_norms(&res.free, &g, (0.0, 0.0), k);
        let gk = res.control.g.slice(k);
        table.push(vec![
            k.into(),
            g.time(k).into(),
            u.into(),
            v.into(),
            fu.into(),
            fv.into(),
            grid::l2_norm(gk, &g).into(),
            h1_norm_sq(gk, &g).sqrt().into(),
        ]);
    }
    let summary = json!({
        "eps": pb.params.eps,
        "tau": pb.tau,
        "cg_iterations": dual.iterations,
        "cg_converged": dual.converged,
        "functional": dual.functional,
        "terminal_u": res.terminal_u,
        "terminal_v": res.terminal_v,
        "free_terminal_u": res.free_terminal_u,
        "free_terminal_v": res.free_terminal_v,
        "terminal_ratio": res.terminal_u / res.free_terminal_u,
        "weighted_norms": res.weighted,
        "control_h1": control_h1_norm(&res.control.g, &g),
        "cross_validation": res.cross_validation,
        "mass_drift": drift,
        "tau_scan": scan_rows,
        "tau_monotone": monotone,
    });
    run.finish(code, table, summary)
}

fn control_setup(cfg: &ExperimentConfig, g: &Grid) -> Result<ControlSetup, CommandError> {
    let regions = cfg.regions();
    let eta = build_eta0(g, regions, cfg.weights.eta_amplitude)?;
    Ok(ControlSetup {
        grid: g.clone(),
        weights: refined_weights(&eta, &cfg.weight_params()?, g),
        chi: build_cutoff(g, &regions)?,
        tau: cfg.solver.tau,
        cg_tol: cfg.solver.cg_tol,
        cg_max_iter: cfg.solver.cg_max_iter,
    })
}

fn picard_options(cfg: &ExperimentConfig) -> PicardOptions {
    PicardOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        damping: cfg.solver.damping,
    }
}

fn initial_state(cfg: &ExperimentConfig, g: &Grid) -> (Field, Field) {
    let pert = mode_field(cfg, g, cfg.data.delta);
    let u0 = pert.iter().map(|x| cfg.physics.m1 + x).collect();
    (u0, vec![cfg.m2(); g.node_count()])
}

fn control_nonlinear(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let mut run = Run::new(cfg, "control-nonlinear");
    let g = cfg.build_grid()?;
    let p = cfg.params(cfg.physics.eps)?;
    let setup = control_setup(cfg, &g)?;
    let (u0, v0) = initial_state(cfg, &g);
    run.lap("setup");
    let res = picard_solve(&p, &setup, &u0, &v0, &picard_options(cfg))?;

    let mut code = match res.status {
        PicardStatus::Converged => exit::OK,
        PicardStatus::MaxIterations => exit::NON_CONVERGENCE,
        PicardStatus::VerificationFailed => exit::FALSIFIED,
    };
    if res.mass_drift > MASS_DRIFT_TOL {
        run.warnings.push(format!("controlled nonlinear run: mass drift {:e}", res.mass_drift));
        code = code.max(exit::FALSIFIED);
    }
    if code != exit::OK {
        run.warnings.push(format!("picard status {:?}", res.status));
    }
    let mut table = Table::new(&["iteration", "terminal_residual", "update_norm", "damping", "cg_iterations"]);
    for s in &res.history {
        table.push(vec![
            s.iteration.into(),
            s.terminal_residual.into(),
            s.update_norm.into(),
            s.damping.into(),
            s.cg_iterations.into(),
        ]);
    }
    let e_norm: serde_json::Map<String, serde_json::Value> = ENorm::NAMES
        .iter()
        .zip(res.e_norm.components)
        .map(|(n, c)| (n.to_string(), json!(c)))
        .collect();
    let summary = json!({
        "eps": p.eps,
        "delta": cfg.data.delta,
        "status": res.status,
        "iterations": res.iterations,
        "terminal_residual": res.terminal_residual(),
        "verification": res.verification,
        "verification_bound": 2.0 * cfg.solver.tol,
        "mass_drift": res.mass_drift,
        "control_h1": res.control_norm,
        "e_norm": e_norm,
        "e_norm_total": res.e_norm.total,
    });
    run.finish(code, table, summary)
}

fn sweep(cfg: &ExperimentConfig) -> Result<Outcome, CommandError> {
    let mut run = Run::new(cfg, "eps-sweep");
    let g = cfg.build_grid()?;
    let p = cfg.params(cfg.physics.eps)?;
    let setup = control_setup(cfg, &g)?;
    let (u0, v0) = initial_state(cfg, &g);
    run.lap("setup");
    let rep = eps_sweep(&p, &setup, &u0, &v0, &cfg.physics.eps_list, &picard_options(cfg))?;

    let mut table = Table::new(&["eps", "converged", "iterations", "control_h1", "terminal_residual", "verification"]);
    for e in &rep.entries {
        table.push(vec![
            e.eps.into(),
            e.converged.into(),
            e.iterations.into(),
            e.control_norm.into(),
            e.terminal_residual.into(),
            e.verification.into(),
        ]);
    }
    let mut code = exit::OK;
    if !rep.excluded.is_empty() {
        run.warnings.push(format!("no convergence for eps in {:?}", rep.excluded));
        code = exit::NON_CONVERGENCE;
    }
    let summary = json!({
        "delta": cfg.data.delta,
        "entries": rep.entries,
        "uniformity_ratio": rep.uniformity_ratio,
        "uniformity_bound": UNIFORMITY_BOUND,
        "within_bound": rep.uniformity_ratio.is_some_and(|r| r <= UNIFORMITY_BOUND),
        "excluded": rep.excluded,
    });
    run.finish(code, table, summary)
}
