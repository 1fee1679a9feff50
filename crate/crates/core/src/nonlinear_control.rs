//! Local null control of the nonlinear system to a constant state by a damped
//! fixed-point iteration on the linear control problem, and the sweep over
//! the relaxation parameter `eps`.

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid, SpaceTimeField};
use crate::hum_control::{apply_l, h1_norm_sq, h2_norm_sq, solve_control, ControlProblem};
use crate::ks_model::{solve_forward_pp, solve_linearized, Control, ForwardOptions, KsParams};
use crate::weights::{RefinedWeightTable, WeightFamily, WeightKind};
use serde::Serialize;

/// Everything the linear control solver needs besides the physics.
#[derive(Debug, Clone)]
pub struct ControlSetup {
    pub grid: Grid,
    pub weights: RefinedWeightTable,
    pub chi: Field,
    pub tau: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping in `(0, 1]`; halved whenever the update norm grows.
    pub damping: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20,
            damping: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PicardStatus {
    Converged,
    MaxIterations,
    /// The fixed point was reached but the nonlinear forward run with the
    /// final control misses the target by more than `2 tol`.
    VerificationFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardStep {
    pub iteration: usize,
    /// `|(z(T), w(T))|` of the linear controlled state.
    pub terminal_residual: f64,
    /// Space-time `L^2` norm of the change of `(z, w)`.
    pub update_norm: f64,
    pub damping: f64,
    pub cg_iterations: usize,
}

/// Weighted components of the product-space norm of `(z, w, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ENorm {
    pub components: [f64; 8],
    pub total: f64,
}

impl ENorm {
    pub const NAMES: [&'static str; 8] = [
        "u_weighted_l2",
        "v_weighted_l2",
        "g_weighted_l2",
        "l1_weighted_l2",
        "l2_minus_control_weighted_h1",
        "u_weighted_h2_linf_h1",
        "v_weighted_h2",
        "g_weighted_h1",
    ];
}

#[derive(Debug, Clone)]
pub struct NonlinearControlResult {
    pub status: PicardStatus,
    pub iterations: usize,
    pub history: Vec<PicardStep>,
    pub control: Control,
    /// Nonlinear forward run with the final control.
    pub u: SpaceTimeField,
    pub v: SpaceTimeField,
    /// Last linear iterate `(z, w)` around `(M1, M2)`.
    pub z: SpaceTimeField,
    pub w: SpaceTimeField,
    /// `|(u(T) - M1, v(T) - M2)|` of the forward run.
    pub verification: f64,
    pub mass_drift: f64,
    pub control_norm: f64,
    pub e_norm: ENorm,
}

impl NonlinearControlResult {
    pub fn converged(&self) -> bool {
        self.status == PicardStatus::Converged
    }

    pub fn terminal_residual(&self) -> f64 {
        self.history.last().map_or(0.0, |s| s.terminal_residual)
    }

    /// Map the status onto the error it stands for.
    pub fn ensure(&self, tol: f64) -> Result<()> {
        match self.status {
            PicardStatus::Converged => Ok(()),
            PicardStatus::MaxIterations => Err(Error::NonConvergence {
                iterations: self.iterations,
                residual: self.history.last().map_or(f64::NAN, |s| s.update_norm),
            }),
            PicardStatus::VerificationFailed => Err(Error::Verification {
                distance: self.verification,
                bound: 2.0 * tol,
            }),
        }
    }
}

/// `-div(z^k grad w^{k-1})` on levels `k >= 1`.
pub fn bilinear_source(z: &SpaceTimeField, w: &SpaceTimeField, grid: &Grid) -> Result<SpaceTimeField> {
    let mut h1 = SpaceTimeField::zeros(grid);
    for k in 1..=grid.steps() {
        let d = grid::chemotaxis_divergence(z.slice(k), w.slice(k - 1), grid)?;
        for (o, x) in h1.slice_mut(k).iter_mut().zip(d) {
            *o = -x;
        }
    }
    Ok(h1)
}

fn spacetime_norm(z: &SpaceTimeField, w: &SpaceTimeField, grid: &Grid) -> f64 {
    let s: f64 = (0..=grid.steps())
        .map(|k| grid::inner(z.slice(k), z.slice(k), grid) + grid::inner(w.slice(k), w.slice(k), grid))
        .sum();
    (grid.dt() * s).sqrt()
}

fn check_initial_mass(p: &KsParams, grid: &Grid, u0: &[f64]) -> Result<()> {
    let mass = grid::mass(u0, grid)?;
    let target = p.m1 * grid.volume();
    if (mass - target).abs() > 1e-10 * target.abs().max(grid.volume()) {
        return Err(Error::MassConstraint {
            what: "u0 - M1",
            mass: mass - target,
        });
    }
    Ok(())
}

/// Control `(u0, v0)` to `(M1, M2)` in time `T`.
pub fn picard_solve(
    p: &KsParams,
    setup: &ControlSetup,
    u0: &[f64],
    v0: &[f64],
    opts: &PicardOptions,
) -> Result<NonlinearControlResult> {
    p.validate()?;
    let grid = &setup.grid;
    grid.check(u0)?;
    grid.check(v0)?;
    check_initial_mass(p, grid, u0)?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let mut z0: Field = u0.iter().map(|u| u - p.m1).collect();
    // Remove the round-off left by the mass check so the linear problem is admissible.
    grid::remove_mean(&mut z0, grid);
    let w0: Field = v0.iter().map(|v| v - p.m2).collect();
    let zero = SpaceTimeField::zeros(grid);
    let mut control = Control::zero(grid, setup.chi.clone());
    let mut history = Vec::new();

    let free = solve_linearized(p, grid, &z0, &w0, &control, &zero, &zero)?;
    let (mut z, mut w) = (free.u, free.v);
    let mut status = PicardStatus::MaxIterations;
    if z0.iter().chain(&w0).all(|x| *x == 0.0) {
        status = PicardStatus::Converged;
    }
    let mut damping = opts.damping;
    let mut prev_update = f64::INFINITY;
    let mut iterations = 0;
    while status != PicardStatus::Converged && iterations < opts.max_iter {
        iterations += 1;
        let pb = ControlProblem {
            params: *p,
            grid: grid.clone(),
            weights: setup.weights.clone(),
            chi: setup.chi.clone(),
            z0: z0.clone(),
            w0: w0.clone(),
            h1: bilinear_source(&z, &w, grid)?,
            h2: zero.clone(),
            tau: setup.tau,
            tol: setup.cg_tol,
            max_iter: setup.cg_max_iter,
        };
        let (dual, res) = solve_control(&pb)?;
        let mut dz = res.state.u.clone();
        dz.axpy(-1.0, &z);
        let mut dw = res.state.v.clone();
        dw.axpy(-1.0, &w);
        let update = spacetime_norm(&dz, &dw, grid);
        if update > prev_update {
            damping *= 0.5;
        }
        prev_update = update;
        z.axpy(damping, &dz);
        w.axpy(damping, &dw);
        let terminal = res.terminal_u.hypot(res.terminal_v);
        control = res.control;
        history.push(PicardStep {
            iteration: iterations,
            terminal_residual: terminal,
            update_norm: update,
            damping,
            cg_iterations: dual.iterations,
        });
        if terminal < opts.tol && update < opts.tol {
            status = PicardStatus::Converged;
        }
    }

    let run = solve_forward_pp(p, grid, u0, v0, &control, &ForwardOptions::default())?;
    let m = grid.steps();
    let du: Field = run.u.slice(m).iter().map(|u| u - p.m1).collect();
    let dv: Field = run.v.slice(m).iter().map(|v| v - p.m2).collect();
    let verification = grid::l2_norm(&du, grid).hypot(grid::l2_norm(&dv, grid));
    if status == PicardStatus::Converged && !(verification < 2.0 * opts.tol) {
        status = PicardStatus::VerificationFailed;
    }
    let e_norm = e_norm(p, grid, &setup.weights, &setup.chi, &z, &w, &control.g, setup.tau)?;
    Ok(NonlinearControlResult {
        status,
        iterations,
        history,
        control_norm: crate::hum_control::control_h1_norm(&control.g, grid),
        mass_drift: run.mass_drift(grid),
        u: run.u,
        v: run.v,
        z,
        w,
        control,
        verification,
        e_norm,
    })
}

/// Log-amplitudes per level, shifted so the smallest finite value is zero and
/// capped at `ln(1/sqrt(floor))`; returns the shift.
fn capped(mut a: Vec<f64>, floor: f64) -> (Vec<f64>, f64) {
    let base = a.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    let base = if base.is_finite() { base } else { 0.0 };
    let cap = -0.5 * floor.ln();
    for x in a.iter_mut() {
        *x = (*x - base).min(cap);
    }
    (a, base)
}

/// Components of the weighted norm of `(z, w, g)`.
///
/// Every weight in the norm grows without bound as `t -> T`. As in the
/// control functional, a weight is capped at `floor^{-1/2}` times its smallest
/// value on the horizon (amplitudes, so `floor^{-1}` on the squares); with
/// `floor = tau` this matches the floor of the dual functional. The third
/// derivative in the `v` component is replaced by the discrete `H^2` norm.
pub fn e_norm(
    p: &KsParams,
    grid: &Grid,
    weights: &RefinedWeightTable,
    chi: &[f64],
    z: &SpaceTimeField,
    w: &SpaceTimeField,
    g: &SpaceTimeField,
    floor: f64,
) -> Result<ENorm> {
    z.check(grid)?;
    w.check(grid)?;
    g.check(grid)?;
    let floor = if floor > 0.0 { floor } else { 1e-32 };
    let m = grid.steps();
    let n = grid.node_count();
    let s = weights.params().s;
    let (r1, r2) = apply_l(z, w, p, grid)?;
    let chig = SpaceTimeField::from_fn(grid, |k| g.slice(k).iter().zip(chi).map(|(a, c)| a * c).collect());
    let mut l2g = r2.clone();
    l2g.axpy(-1.0, &chig);

    let star = |c: f64, pw: f64| -> Vec<f64> {
        (0..=m).map(|k| weights.log_weight_scaled(WeightKind::Star, c, pw, 0, k)).collect()
    };
    let hat = |c: f64, pw: f64| -> Vec<f64> {
        (0..=m).map(|k| weights.log_weight_scaled(WeightKind::Hat, c, pw, 0, k)).collect()
    };
    let mixed = |cs: f64, ch: f64, pw: f64| -> Vec<f64> {
        (0..=m)
            .map(|k| {
                if weights.is_singular(k) {
                    f64::INFINITY
                } else {
                    s * (cs * weights.exponent_star(k) + ch * weights.exponent_hat(k)) + pw * weights.log_base_hat(k)
                }
            })
            .collect()
    };

    // sqrt(dt sum_{k>=1} e^{2 a_k} N(f^k)^2), with the shift restored in the log domain.
    let l2_time = |f: &SpaceTimeField, amp: Vec<f64>, norm_sq: &dyn Fn(&[f64]) -> f64| -> f64 {
        let (a, base) = capped(amp, floor);
        let sum: f64 = (1..=m).map(|k| (2.0 * a[k]).exp() * norm_sq(f.slice(k))).sum();
        if sum == 0.0 {
            0.0
        } else {
            (0.5 * (grid.dt() * sum).ln() + base).exp()
        }
    };
    let l2 = |f: &[f64]| grid::inner(f, f, grid);
    let h1 = |f: &[f64]| h1_norm_sq(f, grid);
    let h2 = |f: &[f64]| h2_norm_sq(f, grid);

    let mut c = [0.0; 8];
    c[0] = l2_time(z, star(-1.0, -5.0), &l2);
    c[1] = l2_time(w, star(-1.0, -1.5), &l2);
    c[2] = l2_time(&chig, star(-1.0, -9.0), &l2);
    c[3] = l2_time(&r1, hat(-1.0, -1.5), &l2);

    // Pointwise weight e^{-s beta} gamma^{-1} inside the H^1 norm.
    {
        let amp: Vec<f64> = (0..=m)
            .flat_map(|k| (0..n).map(move |i| (k, i)))
            .map(|(k, i)| weights.log_weight_scaled(WeightKind::Pointwise, -1.0, -1.0, i, k))
            .collect();
        let (a, base) = capped(amp, floor);
        let mut sum = 0.0;
        for k in 1..=m {
            let f: Field = (0..n).map(|i| a[k * n + i].exp() * l2g.slice(k)[i]).collect();
            sum += h1_norm_sq(&f, grid);
        }
        c[4] = if sum == 0.0 { 0.0 } else { (0.5 * (grid.dt() * sum).ln() + base).exp() };
    }

    {
        let (a, base) = capped(mixed(0.5, -1.0, 13.0 / 8.0), floor);
        let mut sum = 0.0;
        let mut sup = 0.0_f64;
        for k in 1..=m {
            let e2 = (2.0 * a[k]).exp();
            sum += e2 * h2_norm_sq(z.slice(k), grid);
            sup = sup.max(e2 * h1_norm_sq(z.slice(k), grid));
        }
        let l2part = if sum == 0.0 { 0.0 } else { (0.5 * (grid.dt() * sum).ln() + base).exp() };
        let linf = if sup == 0.0 { 0.0 } else { (0.5 * sup.ln() + base).exp() };
        c[5] = l2part + linf;
    }
    c[6] = l2_time(w, mixed(-0.5, 0.0, -25.0 / 8.0), &h2);
    c[7] = l2_time(g, mixed(-0.5, 0.0, -25.0 / 8.0), &h1);
    Ok(ENorm {
        components: c,
        total: c.iter().sum(),
    })
}

/// `|div(z grad w)| / (|z|_{H^1} |w|_{H^2})` for one pair of fields.
pub fn bilinear_ratio(z: &[f64], w: &[f64], grid: &Grid) -> Result<f64> {
    let d = grid::chemotaxis_divergence(z, w, grid)?;
    let den = h1_norm_sq(z, grid).sqrt() * h2_norm_sq(w, grid).sqrt();
    Ok(if den == 0.0 { 0.0 } else { grid::l2_norm(&d, grid) / den })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub control_norm: f64,
    pub iterations: usize,
    pub terminal_residual: f64,
    pub verification: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// `max |g| / min |g|` over converged entries; 1 when all controls vanish.
    pub uniformity_ratio: Option<f64>,
    /// Values of `eps` whose runs failed (excluded from the ratio).
    pub excluded: Vec<f64>,
}

fn sweep_one(p: &KsParams, eps: f64, setup: &ControlSetup, u0: &[f64], v0: &[f64], opts: &PicardOptions) -> SweepEntry {
    let failed = SweepEntry {
        eps,
        control_norm: f64::NAN,
        iterations: 0,
        terminal_residual: f64::NAN,
        verification: f64::NAN,
        converged: false,
    };
    let Ok(pe) = p.with_eps(eps) else { return failed };
    match picard_solve(&pe, setup, u0, v0, opts) {
        Ok(r) => SweepEntry {
            eps,
            control_norm: r.control_norm,
            iterations: r.iterations,
            terminal_residual: r.terminal_residual(),
            verification: r.verification,
            converged: r.converged(),
        },
        Err(_) => failed,
    }
}

/// Run [`picard_solve`] for every `eps` with identical weights, data and
/// tolerances. Runs are independent; results keep the order of `eps_list`.
pub fn eps_sweep(
    p: &KsParams,
    setup: &ControlSetup,
    u0: &[f64],
    v0: &[f64],
    eps_list: &[f64],
    opts: &PicardOptions,
) -> Result<SweepReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("eps list is empty".into()));
    }
    if let Some(bad) = eps_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1], got {bad}")));
    }
    #[cfg(feature = "parallel")]
    let entries: Vec<SweepEntry> = {
        use rayon::prelude::*;
        eps_list.par_iter().map(|&e| sweep_one(p, e, setup, u0, v0, opts)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let entries: Vec<SweepEntry> = eps_list.iter().map(|&e| sweep_one(p, e, setup, u0, v0, opts)).collect();

    let excluded: Vec<f64> = entries.iter().filter(|e| !e.converged).map(|e| e.eps).collect();
    let norms: Vec<f64> = entries.iter().filter(|e| e.converged).map(|e| e.control_norm).collect();
    let uniformity_ratio = if norms.is_empty() {
        None
    } else {
        let max = norms.iter().copied().fold(0.0, f64::max);
        let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
        Some(if max == 0.0 { 1.0 } else { max / min })
    };
    Ok(SweepReport {
        entries,
        uniformity_ratio,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusReport {
    /// Largest amplitude found to converge.
    pub radius: f64,
    /// Smallest amplitude found to fail (`inf` if none did).
    pub failed_at: f64,
    pub bisections: usize,
}

/// Bisection on the amplitude `delta` of `u0 = M1 + delta shape`, `v0 = M2`.
pub fn convergence_radius(
    p: &KsParams,
    setup: &ControlSetup,
    shape: &[f64],
    mut lo: f64,
    mut hi: f64,
    bisections: usize,
    opts: &PicardOptions,
) -> Result<RadiusReport> {
    let grid = &setup.grid;
    grid.check(shape)?;
    let v0 = vec![p.m2; grid.node_count()];
    let converges = |delta: f64| -> bool {
        let u0: Field = shape.iter().map(|s| p.m1 + delta * s).collect();
        matches!(picard_solve(p, setup, &u0, &v0, opts), Ok(r) if r.converged())
    };
    if !converges(lo) {
        return Err(Error::InvalidParameter(format!("lower amplitude {lo} does not converge")));
    }
    if converges(hi) {
        return Ok(RadiusReport {
            radius: hi,
            failed_at: f64::INFINITY,
            bisections: 0,
        });
    }
    for _ in 0..bisections {
        let mid = 0.5 * (lo + hi);
        if converges(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RadiusReport {
        radius: lo,
        failed_at: hi,
        bisections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ks_model::build_cutoff;
    use crate::weights::{build_eta0, refined_weights, ControlRegions, Subdomain, WeightParams};
    use std::f64::consts::PI;

    fn setup(n: usize, m: usize) -> ControlSetup {
        let grid = Grid::one_d(1.0, n, 2.0, m).unwrap();
        let regions = ControlRegions {
            omega0: Subdomain::interval(0.3, 0.4),
            omega_prime: Subdomain::interval(0.25, 0.45),
            omega: Subdomain::interval(0.2, 0.5),
        };
        let eta = build_eta0(&grid, regions, 0.01).unwrap();
        let wp = WeightParams::from_sigma(1.0, 1.5, 2.0).unwrap();
        ControlSetup {
            weights: refined_weights(&eta, &wp, &grid),
            chi: build_cutoff(&grid, &regions).unwrap(),
            grid,
            tau: 1e-8,
            cg_tol: 1e-10,
            cg_max_iter: 3000,
        }
    }

    #[test]
    fn steady_state_needs_no_control() {
        let st = setup(16, 32);
        let p = KsParams::with_steady_state(1.0, 1.0, 0.5, 1.0).unwrap();
        let u0 = vec![p.m1; st.grid.node_count()];
        let v0 = vec![p.m2; st.grid.node_count()];
        let r = picard_solve(&p, &st, &u0, &v0, &PicardOptions::default()).unwrap();
        assert!(r.converged());
        assert_eq!(r.iterations, 0);
        assert!(r.control.g.is_zero());
        assert!(r.e_norm.components.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn small_perturbation_is_controlled() {
        let st = setup(24, 40);
        let p = KsParams::with_steady_state(1.0, 1.0, 0.5, 1.0).unwrap();
        let u0 = st.grid.sample(|[x, _]| p.m1 + 0.01 * (PI * x).cos());
        let v0 = vec![p.m2; st.grid.node_count()];
        let opts = PicardOptions::default();
        let r = picard_solve(&p, &st, &u0, &v0, &opts).unwrap();
        r.ensure(opts.tol).unwrap();
        assert!(r.iterations <= 20);
        assert!(r.mass_drift < 1e-11);
        assert!(r.e_norm.total.is_finite());
    }

    #[test]
    fn wrong_mass_is_rejected() {
        let st = setup(16, 32);
        let p = KsParams::with_steady_state(1.0, 1.0, 0.5, 1.0).unwrap();
        let u0 = vec![1.1; st.grid.node_count()];
        let v0 = vec![p.m2; st.grid.node_count()];
        assert!(matches!(
            picard_solve(&p, &st, &u0, &v0, &PicardOptions::default()),
            Err(Error::MassConstraint { .. })
        ));
    }

    #[test]
    fn single_eps_sweep_has_unit_ratio() {
        let st = setup(16, 32);
        let p = KsParams::with_steady_state(1.0, 1.0, 1.0, 1.0).unwrap();
        let u0 = st.grid.sample(|[x, _]| p.m1 + 0.01 * (PI * x).cos());
        let v0 = vec![p.m2; st.grid.node_count()];
        let rep = eps_sweep(&p, &st, &u0, &v0, &[1.0], &PicardOptions::default()).unwrap();
        assert_eq!(rep.uniformity_ratio, Some(1.0));
    }
}
