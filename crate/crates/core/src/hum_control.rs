//! Weighted variational null control of the linearized system.
//!
//! The dual unknown is an adjoint trajectory, parameterized by its sources
//! `F_j` and terminal data `q_T = (phi_T, xi_T)`. The functional
//!
//! ```text
//! J = 1/2 dt sum_j [rho1 |F1_j|^2 + rho2 |F2_j|^2 + rho0 |chi xi_j|^2]
//!   + tau/2 (|phi_T|^2 + eps |xi_T|^2) - l(F, q_T)
//! ```
//!
//! is minimized by preconditioned conjugate gradients, where `l` pairs the
//! adjoint with the data `(z0, w0, h1, h2)`. At the minimizer the state is
//! `(u, v) = (rho1 F1, rho2 F2)` driven by `g = -rho0 chi xi`, and its
//! terminal value is of order `tau`.
//!
//! The weights `rho` are `e^{2 s beta*} gamma*^k` with `k = 10, 3, 18`,
//! sampled at `t_{j+1}` (the primal level paired with `F_j`), divided by a
//! common constant so the largest `rho1` is one, and floored at `tau` for the
//! source weights so that the quadratic form stays definite.

use crate::adjoint::backward_march;
use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid, SpaceTimeField};
use crate::ks_model::{linearized_march, solve_linearized, Control, KsParams, StateTrajectory};
use crate::weights::{log_weight, RefinedWeightTable, WeightFamily, WeightKind};
use serde::Serialize;

/// Exponent pairs `(power of gamma*)` of the three weights.
pub const POWER_U: f64 = 10.0;
pub const POWER_V: f64 = 3.0;
pub const POWER_G: f64 = 18.0;

/// Relative tolerance of the forward cross-validation in [`extract_control`].
pub const CROSS_VALIDATION_TOL: f64 = 1e-8;

/// Source-weight floor used when `tau = 0`.
const ZERO_TAU_FLOOR: f64 = 1e-32;

/// Per-level logarithms of the control weights.
#[derive(Debug, Clone)]
pub struct HumWeights {
    pub log_rho_u: Vec<f64>,
    pub log_rho_v: Vec<f64>,
    pub log_rho_g: Vec<f64>,
    /// Common constant subtracted from all three logarithms.
    pub log_scale: f64,
    pub floor: f64,
}

impl HumWeights {
    pub fn new(table: &RefinedWeightTable, tau: f64) -> Result<Self> {
        let levels = table.levels();
        let star = |power: f64| -> Result<Vec<f64>> {
            (0..levels).map(|k| log_weight(table, WeightKind::Star, power, 0, k)).collect()
        };
        let log_rho_u = star(POWER_U)?;
        let log_rho_v = star(POWER_V)?;
        let log_rho_g = star(POWER_G)?;
        let log_scale = log_rho_u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !log_scale.is_finite() {
            return Err(Error::InvalidParameter("control weights vanish on every level".into()));
        }
        let floor = if tau > 0.0 { tau } else { ZERO_TAU_FLOOR };
        Ok(Self {
            log_rho_u,
            log_rho_v,
            log_rho_g,
            log_scale,
            floor,
        })
    }

    fn norm(&self, log: f64) -> f64 {
        (log - self.log_scale).exp()
    }

    /// Normalized and floored weight of the density source at level `k`.
    pub fn rho_u(&self, k: usize) -> f64 {
        self.norm(self.log_rho_u[k]).max(self.floor)
    }

    pub fn rho_v(&self, k: usize) -> f64 {
        self.norm(self.log_rho_v[k]).max(self.floor)
    }

    /// Normalized observation weight at level `k` (not floored).
    pub fn rho_g(&self, k: usize) -> f64 {
        self.norm(self.log_rho_g[k])
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub params: KsParams,
    pub grid: Grid,
    pub weights: RefinedWeightTable,
    pub chi: Field,
    pub z0: Field,
    pub w0: Field,
    pub h1: SpaceTimeField,
    pub h2: SpaceTimeField,
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        self.params.validate()?;
        g.check(&self.chi)?;
        g.check(&self.z0)?;
        g.check(&self.w0)?;
        self.h1.check(g)?;
        self.h2.check(g)?;
        if self.weights.levels() != g.steps() + 1 || self.weights.nodes() != g.node_count() {
            return Err(Error::SizeMismatch {
                expected: g.steps() + 1,
                found: self.weights.levels(),
            });
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        crate::ks_model::check_zero_mass(&self.z0, g, "z0")?;
        for k in 0..=g.steps() {
            crate::ks_model::check_zero_mass(self.h1.slice(k), g, "h1(t)")?;
        }
        Ok(())
    }
}

/// Dual unknown in preconditioned coordinates: `F = rho^{-1/2} f`,
/// `phi_T = tau^{-1/2} a`, `xi_T = (tau eps)^{-1/2} b`.
#[derive(Debug, Clone, PartialEq)]
struct DualVec {
    /// Levels `0..m`; level `j` holds the scaled `F_j`.
    f1: Vec<f64>,
    f2: Vec<f64>,
    phi_t: Field,
    xi_t: Field,
}

impl DualVec {
    fn zeros(nodes: usize, steps: usize) -> Self {
        Self {
            f1: vec![0.0; nodes * steps],
            f2: vec![0.0; nodes * steps],
            phi_t: vec![0.0; nodes],
            xi_t: vec![0.0; nodes],
        }
    }

    fn dot(&self, o: &Self, grid: &Grid) -> f64 {
        let w = grid.quadrature();
        let n = w.len();
        let mut src = 0.0;
        for (j, (a, b)) in self.f1.chunks(n).zip(o.f1.chunks(n)).enumerate() {
            src += grid::inner(a, b, grid) + grid::inner(&self.f2[j * n..(j + 1) * n], &o.f2[j * n..(j + 1) * n], grid);
        }
        grid.dt() * src + grid::inner(&self.phi_t, &o.phi_t, grid) + grid::inner(&self.xi_t, &o.xi_t, grid)
    }

    fn axpy(&mut self, c: f64, o: &Self) {
        let pairs = [
            (&mut self.f1, &o.f1),
            (&mut self.f2, &o.f2),
            (&mut self.phi_t, &o.phi_t),
            (&mut self.xi_t, &o.xi_t),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += c * y);
        }
    }

    /// `self = o + c self`.
    fn xpay(&mut self, o: &Self, c: f64) {
        let pairs = [
            (&mut self.f1, &o.f1),
            (&mut self.f2, &o.f2),
            (&mut self.phi_t, &o.phi_t),
            (&mut self.xi_t, &o.xi_t),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x = y + c * *x);
        }
    }
}

/// Precomputed scalings of one problem.
struct Operator<'a> {
    pb: &'a ControlProblem,
    /// `rho^{-1/2}` of `F_j` (weights at level `j + 1`).
    su: Vec<f64>,
    sv: Vec<f64>,
    /// `rho0` at level `j + 1`, paired with `xi_j`.
    obs: Vec<f64>,
    /// Terminal scalings.
    s_phi: f64,
    s_xi: f64,
    chi2: Field,
}

impl<'a> Operator<'a> {
    fn new(pb: &'a ControlProblem) -> Result<Self> {
        let w = HumWeights::new(&pb.weights, pb.tau)?;
        let m = pb.grid.steps();
        let su = (0..m).map(|j| w.rho_u(j + 1).powf(-0.5)).collect();
        let sv = (0..m).map(|j| w.rho_v(j + 1).powf(-0.5)).collect();
        let obs = (0..m).map(|j| w.rho_g(j + 1)).collect();
        let (s_phi, s_xi) = if pb.tau > 0.0 {
            (pb.tau.powf(-0.5), (pb.tau * pb.params.eps).powf(-0.5))
        } else {
            (1.0, 1.0)
        };
        let chi2 = pb.chi.iter().map(|c| c * c).collect();
        Ok(Self {
            pb,
            su,
            sv,
            obs,
            s_phi,
            s_xi,
            chi2,
        })
    }

    fn grid(&self) -> &Grid {
        &self.pb.grid
    }

    /// Adjoint trajectory of a scaled dual vector.
    fn adjoint(&self, x: &DualVec) -> (SpaceTimeField, SpaceTimeField) {
        let g = self.grid();
        let n = g.node_count();
        let m = g.steps();
        let mut phi = SpaceTimeField::zeros(g);
        let mut xi = SpaceTimeField::zeros(g);
        for i in 0..n {
            phi.slice_mut(m)[i] = self.s_phi * x.phi_t[i];
            xi.slice_mut(m)[i] = self.s_xi * x.xi_t[i];
        }
        backward_march(
            &self.pb.params,
            g,
            &mut phi,
            &mut xi,
            |j, out| {
                for (o, f) in out.iter_mut().zip(&x.f1[j * n..(j + 1) * n]) {
                    *o = self.su[j] * f;
                }
            },
            |j, out| {
                for (o, f) in out.iter_mut().zip(&x.f2[j * n..(j + 1) * n]) {
                    *o = self.sv[j] * f;
                }
            },
        );
        (phi, xi)
    }

    /// Scaled Riesz representer of `F, q_T -> dt sum <y^{j+1}, F_j> + [y^m, q_T]`.
    fn representer(&self, z: &SpaceTimeField, w: &SpaceTimeField) -> DualVec {
        let g = self.grid();
        let n = g.node_count();
        let m = g.steps();
        let p = &self.pb.params;
        let mut out = DualVec::zeros(n, m);
        for j in 0..m {
            let (zs, ws) = (z.slice(j + 1), w.slice(j + 1));
            for i in 0..n {
                out.f1[j * n + i] = self.su[j] * zs[i];
                out.f2[j * n + i] = self.sv[j] * ws[i];
            }
        }
        let mut tz = z.slice(m).to_vec();
        grid::laplacian_add(w.slice(m), g, -g.dt() * p.m1, &mut tz);
        grid::remove_mean(&mut tz, g);
        for i in 0..n {
            out.phi_t[i] = self.s_phi * tz[i];
            out.xi_t[i] = self.s_xi * p.eps * w.slice(m)[i];
        }
        out
    }

    /// Linear state driven through the chemical equation by `src2`, from rest.
    fn forward_from_rest(&self, src2: impl Fn(usize, &mut [f64])) -> Result<(SpaceTimeField, SpaceTimeField)> {
        let g = self.grid();
        let mut z = SpaceTimeField::zeros(g);
        let mut w = SpaceTimeField::zeros(g);
        linearized_march(&self.pb.params, g, &mut z, &mut w, |_, out| out.fill(0.0), src2)?;
        Ok((z, w))
    }

    /// Hessian of the scaled functional applied to `x`.
    fn apply(&self, x: &DualVec) -> Result<DualVec> {
        let g = self.grid();
        let n = g.node_count();
        let (_, xi) = self.adjoint(x);
        let (z, w) = self.forward_from_rest(|k, out| {
            let c = self.obs[k - 1];
            let xs = xi.slice(k - 1);
            for i in 0..n {
                out[i] = c * self.chi2[i] * xs[i];
            }
        })?;
        let mut out = self.representer(&z, &w);
        out.axpy(1.0, x);
        Ok(out)
    }

    fn rhs(&self) -> Result<(DualVec, StateTrajectory)> {
        let pb = self.pb;
        let free = solve_linearized(
            &pb.params,
            &pb.grid,
            &pb.z0,
            &pb.w0,
            &Control::zero(&pb.grid, pb.chi.clone()),
            &pb.h1,
            &pb.h2,
        )?;
        Ok((self.representer(&free.u, &free.v), free))
    }
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    /// Adjoint trajectory `(phi, xi)` of the minimizer.
    pub phi: SpaceTimeField,
    pub xi: SpaceTimeField,
    /// Unscaled sources `F_j` (level `m` is zero) and terminal data.
    pub f1: SpaceTimeField,
    pub f2: SpaceTimeField,
    pub phi_t: Field,
    pub xi_t: Field,
    /// `J` at the minimizer.
    pub functional: f64,
    pub iterations: usize,
    /// Relative residual `|r_k| / |b|` per iteration, starting with `k = 0`.
    pub residuals: Vec<f64>,
    /// Decrease of the functional in each iteration (`alpha^2 d^T H d / 2`).
    pub decrements: Vec<f64>,
    pub converged: bool,
    /// Uncontrolled linear trajectory with the same data.
    pub free: StateTrajectory,
}

/// Minimize the weighted functional by preconditioned CG.
///
/// Non-convergence after `max_iter` iterations is an error carrying the last
/// relative residual; a non-positive curvature is reported as
/// [`Error::Indefinite`].
pub fn solve_dual(pb: &ControlProblem) -> Result<DualSolution> {
    let out = solve_dual_unchecked(pb)?;
    if !out.converged {
        return Err(Error::NonConvergence {
            iterations: out.iterations,
            residual: *out.residuals.last().unwrap_or(&f64::NAN),
        });
    }
    Ok(out)
}

/// As [`solve_dual`] but returns the last iterate when `max_iter` is reached.
pub fn solve_dual_unchecked(pb: &ControlProblem) -> Result<DualSolution> {
    pb.validate()?;
    let op = Operator::new(pb)?;
    let g = &pb.grid;
    let (b, free) = op.rhs()?;
    let bnorm = b.dot(&b, g).sqrt();
    let mut x = DualVec::zeros(g.node_count(), g.steps());
    let mut residuals = vec![if bnorm > 0.0 { 1.0 } else { 0.0 }];
    let mut decrements = Vec::new();
    let mut iterations = 0;
    let mut converged = bnorm == 0.0;
    if !converged {
        let mut r = b.clone();
        let mut d = r.clone();
        let mut rr = r.dot(&r, g);
        while iterations < pb.max_iter {
            let hd = op.apply(&d)?;
            let curv = d.dot(&hd, g);
            if !(curv > 0.0) {
                return Err(Error::Indefinite {
                    iteration: iterations,
                    curvature: curv,
                });
            }
            let alpha = rr / curv;
            x.axpy(alpha, &d);
            r.axpy(-alpha, &hd);
            // Exact line search lowers J by alpha^2 curv / 2.
            decrements.push(0.5 * alpha * rr);
            iterations += 1;
            let rr_new = r.dot(&r, g);
            residuals.push(rr_new.sqrt() / bnorm);
            if rr_new.sqrt() <= pb.tol * bnorm {
                converged = true;
                break;
            }
            d.xpay(&r, rr_new / rr);
            rr = rr_new;
        }
    }
    let functional = -decrements.iter().sum::<f64>();
    let (phi, xi) = op.adjoint(&x);
    let n = g.node_count();
    let mut f1 = SpaceTimeField::zeros(g);
    let mut f2 = SpaceTimeField::zeros(g);
    for j in 0..g.steps() {
        for i in 0..n {
            f1.slice_mut(j)[i] = op.su[j] * x.f1[j * n + i];
            f2.slice_mut(j)[i] = op.sv[j] * x.f2[j * n + i];
        }
    }
    Ok(DualSolution {
        phi_t: phi.slice(g.steps()).to_vec(),
        xi_t: xi.slice(g.steps()).to_vec(),
        phi,
        xi,
        f1,
        f2,
        functional,
        iterations,
        residuals,
        decrements,
        converged,
        free,
    })
}

/// Weighted norms of a control result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNorms {
    /// `|e^{-s beta*} gamma*^{-5} u|`.
    pub u: f64,
    /// `|e^{-s beta*} gamma*^{-3/2} v|`.
    pub v: f64,
    /// `|chi e^{-s beta*} gamma*^{-9} g|`.
    pub g: f64,
}

#[derive(Debug, Clone)]
pub struct ControlResult {
    pub control: Control,
    /// Extracted state `(u, v) = (rho1 F1, rho2 F2)`.
    pub state: StateTrajectory,
    pub free: StateTrajectory,
    pub terminal_u: f64,
    pub terminal_v: f64,
    pub free_terminal_u: f64,
    pub free_terminal_v: f64,
    pub weighted: WeightedNorms,
    /// `|g|_{L^2(0,T; H^1)}` with the discrete gradient.
    pub control_norm: f64,
    /// Relative distance between the extracted state and a forward run with `g`.
    pub cross_validation: f64,
}

/// Discrete `H^1` norm squared, `|f|^2 + <-Lap f, f>`.
pub fn h1_norm_sq(f: &[f64], grid: &Grid) -> f64 {
    let mut lap = vec![0.0; f.len()];
    grid::laplacian_add(f, grid, -1.0, &mut lap);
    grid::inner(f, f, grid) + grid::inner(&lap, f, grid)
}

/// `|g|_{L^2(0,T; H^1)}` over the levels that drive the scheme (`1..=m`).
pub fn control_h1_norm(g: &SpaceTimeField, grid: &Grid) -> f64 {
    let s: f64 = (1..=grid.steps()).map(|k| h1_norm_sq(g.slice(k), grid)).sum();
    (grid.dt() * s).sqrt()
}

/// `(dt sum_{k>=1} e^{-lw(k)} |f^k|^2)^{1/2}`, summed in the log domain.
/// Levels where `f` vanishes contribute nothing whatever their weight.
pub(crate) fn weighted_l2(f: &SpaceTimeField, grid: &Grid, log_w: impl Fn(usize) -> f64) -> f64 {
    let s: f64 = (1..=grid.steps())
        .map(|k| {
            let n2 = grid::inner(f.slice(k), f.slice(k), grid);
            if n2 == 0.0 {
                0.0
            } else {
                (n2.ln() - log_w(k)).exp()
            }
        })
        .sum();
    (grid.dt() * s).sqrt()
}

/// Form `g`, `u`, `v` from the dual solution and check them against a forward run.
pub fn extract_control(dual: &DualSolution, pb: &ControlProblem) -> Result<ControlResult> {
    let g = &pb.grid;
    let w = HumWeights::new(&pb.weights, pb.tau)?;
    let m = g.steps();
    let n = g.node_count();
    let mut ctl = Control::zero(g, pb.chi.clone());
    let mut u = SpaceTimeField::zeros(g);
    let mut v = SpaceTimeField::zeros(g);
    u.slice_mut(0).copy_from_slice(&pb.z0);
    v.slice_mut(0).copy_from_slice(&pb.w0);
    for k in 1..=m {
        let (ru, rv, rg) = (w.rho_u(k), w.rho_v(k), w.rho_g(k));
        for i in 0..n {
            u.slice_mut(k)[i] = ru * dual.f1.slice(k - 1)[i];
            v.slice_mut(k)[i] = rv * dual.f2.slice(k - 1)[i];
            ctl.g.slice_mut(k)[i] = -rg * pb.chi[i] * dual.xi.slice(k - 1)[i];
        }
    }
    // Level 0 does not enter the scheme; it is filled for reporting only.
    let r0 = w.rho_g(0);
    for i in 0..n {
        ctl.g.slice_mut(0)[i] = -r0 * pb.chi[i] * dual.xi.slice(0)[i];
    }
    let state = StateTrajectory {
        u,
        v,
        params: pb.params,
    };
    let run = solve_linearized(&pb.params, g, &pb.z0, &pb.w0, &ctl, &pb.h1, &pb.h2)?;
    let scale = run.u.max_abs().max(run.v.max_abs()).max(f64::MIN_POSITIVE);
    let mut diff = run.u.clone();
    diff.axpy(-1.0, &state.u);
    let mut dv = run.v.clone();
    dv.axpy(-1.0, &state.v);
    let cross_validation = diff.max_abs().max(dv.max_abs()) / scale;
    if !(cross_validation <= CROSS_VALIDATION_TOL) {
        return Err(Error::CrossValidation {
            what: "extracted state vs forward run",
            rel: cross_validation,
            tol: CROSS_VALIDATION_TOL,
        });
    }

    // Norms use the weights the functional actually carried (floor included).
    let ls = w.log_scale;
    let mut chig = ctl.g.clone();
    for k in 0..=m {
        for (x, c) in chig.slice_mut(k).iter_mut().zip(&pb.chi) {
            *x *= c;
        }
    }
    let weighted = WeightedNorms {
        u: weighted_l2(&state.u, g, |k| w.rho_u(k).ln() + ls),
        v: weighted_l2(&state.v, g, |k| w.rho_v(k).ln() + ls),
        g: weighted_l2(&chig, g, |k| w.log_rho_g[k]),
    };
    let (tu, tv) = state.terminal();
    let (fu, fv) = dual.free.terminal();
    Ok(ControlResult {
        terminal_u: grid::l2_norm(tu, g),
        terminal_v: grid::l2_norm(tv, g),
        free_terminal_u: grid::l2_norm(fu, g),
        free_terminal_v: grid::l2_norm(fv, g),
        control_norm: control_h1_norm(&ctl.g, g),
        control: ctl,
        state,
        free: dual.free.clone(),
        weighted,
        cross_validation,
    })
}

/// [`solve_dual`] followed by [`extract_control`].
pub fn solve_control(pb: &ControlProblem) -> Result<(DualSolution, ControlResult)> {
    let dual = solve_dual(pb)?;
    let res = extract_control(&dual, pb)?;
    Ok((dual, res))
}

/// Discrete `L^*` of an adjoint pair: returns the sources `F_j` (level `m`
/// is zero) that [`crate::adjoint::solve_adjoint`] would need to produce it.
pub fn apply_lstar(
    phi: &SpaceTimeField,
    xi: &SpaceTimeField,
    p: &KsParams,
    grid: &Grid,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    phi.check(grid)?;
    xi.check(grid)?;
    let dt = grid.dt();
    let mut f1 = SpaceTimeField::zeros(grid);
    let mut f2 = SpaceTimeField::zeros(grid);
    for j in 0..grid.steps() {
        let (p0, p1, x0, x1) = (phi.slice(j), phi.slice(j + 1), xi.slice(j), xi.slice(j + 1));
        let mut a = vec![0.0; p0.len()];
        grid::laplacian_add(p0, grid, -1.0, &mut a);
        let mut c = vec![0.0; p0.len()];
        grid::laplacian_add(x0, grid, -1.0, &mut c);
        grid::laplacian_add(p1, grid, p.m1, &mut c);
        let o1 = f1.slice_mut(j);
        for i in 0..p0.len() {
            o1[i] = (p0[i] - p1[i]) / dt + a[i] - p.a * x0[i];
        }
        let o2 = f2.slice_mut(j);
        for i in 0..p0.len() {
            o2[i] = p.eps * (x0[i] - x1[i]) / dt + p.b * x0[i] + c[i];
        }
    }
    Ok((f1, f2))
}

/// Discrete `L` of a state pair: returns `(h1^k, s^k)` for `k >= 1` such that
/// the linearized scheme with density source `h1` and chemical source `s`
/// reproduces `(z, w)`; level 0 is zero.
pub fn apply_l(
    z: &SpaceTimeField,
    w: &SpaceTimeField,
    p: &KsParams,
    grid: &Grid,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    z.check(grid)?;
    w.check(grid)?;
    let dt = grid.dt();
    let mut r1 = SpaceTimeField::zeros(grid);
    let mut r2 = SpaceTimeField::zeros(grid);
    for k in 1..=grid.steps() {
        let (z0, z1, w0, w1) = (z.slice(k - 1), z.slice(k), w.slice(k - 1), w.slice(k));
        let mut a = vec![0.0; z0.len()];
        grid::laplacian_add(z1, grid, -1.0, &mut a);
        grid::laplacian_add(w0, grid, p.m1, &mut a);
        let mut c = vec![0.0; z0.len()];
        grid::laplacian_add(w1, grid, -1.0, &mut c);
        let o1 = r1.slice_mut(k);
        for i in 0..z0.len() {
            o1[i] = (z1[i] - z0[i]) / dt + a[i];
        }
        let o2 = r2.slice_mut(k);
        for i in 0..z0.len() {
            o2[i] = p.eps * (w1[i] - w0[i]) / dt + p.b * w1[i] - p.a * z1[i] + c[i];
        }
    }
    Ok((r1, r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticReport {
    pub eps: f64,
    /// `|z|_{L^2(H^2)}`.
    pub solution_norm: f64,
    /// `|f|_{L^2(H^1)} + |z0|_{H^2}`.
    pub data_norm: f64,
    pub ratio: f64,
}

/// Discrete `H^2` norm squared, `|f|_{H^1}^2 + |Lap f|^2`.
pub fn h2_norm_sq(f: &[f64], grid: &Grid) -> f64 {
    let mut lap = vec![0.0; f.len()];
    grid::laplacian_add(f, grid, 1.0, &mut lap);
    h1_norm_sq(f, grid) + grid::inner(&lap, &lap, grid)
}

/// Solve `eps z_t - Lap z + z = f` and compare `|z|_{L^2(H^2)}` with the data.
pub fn elliptic_regularity_check(grid: &Grid, f: &SpaceTimeField, z0: &[f64], eps: f64) -> Result<EllipticReport> {
    f.check(grid)?;
    grid.check(z0)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let dt = grid.dt();
    let mut z = z0.to_vec();
    let mut sol = 0.0;
    let mut dat = 0.0;
    for k in 1..=grid.steps() {
        let rhs: Field = z.iter().zip(f.slice(k)).map(|(a, b)| eps / dt * a + b).collect();
        z = grid.solve_shifted(eps / dt + 1.0, &rhs)?;
        sol += h2_norm_sq(&z, grid);
        dat += h1_norm_sq(f.slice(k), grid);
    }
    let solution_norm = (dt * sol).sqrt();
    let data_norm = (dt * dat).sqrt() + h2_norm_sq(z0, grid).sqrt();
    let ratio = if solution_norm == 0.0 { 0.0 } else { solution_norm / data_norm };
    Ok(EllipticReport {
        eps,
        solution_norm,
        data_norm,
        ratio,
    })
}
