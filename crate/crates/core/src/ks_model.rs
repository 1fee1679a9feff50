//! Forward solvers for the controlled Keller-Segel system, its
//! parabolic-elliptic limit and its linearization around a constant state.
//!
//! All three use implicit Euler with the same splitting: the density equation
//! is advanced first with the chemical gradient (or coupling term) taken from
//! the previous level, then the chemical equation is advanced implicitly with
//! the new density. Because of that splitting the nonlinear step around
//! `(M1, M2)` is exactly the linearized step plus the source
//! `h1 = -div(z^{k+1} grad w^k)`, which is what the fixed-point control loop
//! relies on.

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid, SpaceTimeField};
use crate::linalg::BandMatrix;
use crate::weights::ControlRegions;
use serde::{Deserialize, Serialize};

/// Physical constants and the target constant state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsParams {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    pub m1: f64,
    pub m2: f64,
}

impl KsParams {
    pub fn new(a: f64, b: f64, eps: f64, m1: f64, m2: f64) -> Result<Self> {
        let p = Self { a, b, eps, m1, m2 };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `M2 = a M1 / b`.
    pub fn with_steady_state(a: f64, b: f64, eps: f64, m1: f64) -> Result<Self> {
        Self::new(a, b, eps, m1, a * m1 / b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !(self.b > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "a and b must be positive (a = {}, b = {})",
                self.a, self.b
            )));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1], got {}", self.eps)));
        }
        let defect = self.a * self.m1 - self.b * self.m2;
        if !(defect.abs() < 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "(M1, M2) is not a constant trajectory: a*M1 - b*M2 = {defect:e}"
            )));
        }
        Ok(())
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.a, self.b, eps, self.m1, self.m2)
    }
}

/// Quintic smoothstep, C2 with `s(0) = 0`, `s(1) = 1`.
fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// Cutoff equal to one on `omega'`, zero outside `omega`, C2 in between.
pub fn build_cutoff(grid: &Grid, regions: &ControlRegions) -> Result<Field> {
    regions.validate(grid)?;
    let (inner, outer) = (regions.omega_prime, regions.omega);
    let dim = grid.dim();
    Ok(grid.sample(|p| {
        (0..dim)
            .map(|a| {
                let x = p[a];
                if x <= outer.lo[a] || x >= outer.hi[a] {
                    0.0
                } else if x < inner.lo[a] {
                    smoothstep((x - outer.lo[a]) / (inner.lo[a] - outer.lo[a]))
                } else if x > inner.hi[a] {
                    smoothstep((outer.hi[a] - x) / (outer.hi[a] - inner.hi[a]))
                } else {
                    1.0
                }
            })
            .product()
    }))
}

/// Distributed control acting on the chemical equation through `chi`.
#[derive(Debug, Clone)]
pub struct Control {
    pub g: SpaceTimeField,
    pub chi: Field,
}

impl Control {
    pub fn zero(grid: &Grid, chi: Field) -> Self {
        Self {
            g: SpaceTimeField::zeros(grid),
            chi,
        }
    }

    /// `chi * g` at level `k`.
    pub fn source(&self, k: usize) -> Field {
        self.g.slice(k).iter().zip(&self.chi).map(|(g, c)| g * c).collect()
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        grid.check(&self.chi)?;
        self.g.check(grid)
    }
}

#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub u: SpaceTimeField,
    pub v: SpaceTimeField,
    pub params: KsParams,
}

impl StateTrajectory {
    /// Largest `|mass(u(t)) - mass(u(0))|` over all levels, relative to
    /// `max(|mass(u(0))|, |Omega|)`.
    pub fn mass_drift(&self, grid: &Grid) -> f64 {
        let m0 = grid::inner(self.u.slice(0), &vec![1.0; grid.node_count()], grid);
        let scale = m0.abs().max(grid.volume());
        (0..self.u.levels())
            .map(|k| {
                let mk = grid::inner(self.u.slice(k), &vec![1.0; grid.node_count()], grid);
                (mk - m0).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    pub fn min_u(&self) -> f64 {
        self.u.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn terminal(&self) -> (&[f64], &[f64]) {
        let m = self.u.levels() - 1;
        (self.u.slice(m), self.v.slice(m))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    /// Reported as [`Error::BlowUp`] when `max |u|` exceeds it.
    pub blowup_cap: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self { blowup_cap: 1e6 }
    }
}

fn axis_stride(grid: &Grid, axis: usize) -> usize {
    if axis == 0 {
        1
    } else {
        grid.axis_nodes(0)
    }
}

/// Matrix of `u -> u/dt - Lap u + div(u grad v)`.
fn density_operator(grid: &Grid, v: &[f64]) -> BandMatrix {
    let n = grid.node_count();
    let bw = if grid.dim() == 1 { 1 } else { grid.axis_nodes(0) };
    let mut mat = BandMatrix::zeros(n, bw, bw);
    let inv_dt = 1.0 / grid.dt();
    for node in 0..n {
        mat.add(node, node, inv_dt);
    }
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let nint = grid.intervals()[axis];
        let stride = axis_stride(grid, axis);
        for node in 0..n {
            let i = grid.multi_index(node)[axis];
            let cell = if i == 0 || i == nint { 0.5 * h * h } else { h * h };
            // Face to the right: flux = 0.5 (u_i + u_r)(v_r - v_i)/h - (u_r - u_i)/h.
            if i < nint {
                let r = node + stride;
                let dv = v[r] - v[node];
                mat.add(node, node, (0.5 * dv + 1.0) / cell);
                mat.add(node, r, (0.5 * dv - 1.0) / cell);
            }
            if i > 0 {
                let l = node - stride;
                let dv = v[node] - v[l];
                mat.add(node, node, (-0.5 * dv + 1.0) / cell);
                mat.add(node, l, (-0.5 * dv - 1.0) / cell);
            }
        }
    }
    mat
}

fn check_blowup(u: &[f64], step: usize, cap: f64) -> Result<()> {
    let max_abs = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if !(max_abs <= cap) {
        return Err(Error::BlowUp { step, max_abs, cap });
    }
    Ok(())
}

fn density_step(grid: &Grid, u_prev: &[f64], v_lag: &[f64]) -> Result<Field> {
    let mut mat = density_operator(grid, v_lag);
    mat.factor()?;
    let inv_dt = 1.0 / grid.dt();
    let mut rhs: Field = u_prev.iter().map(|x| x * inv_dt).collect();
    mat.solve_in_place(&mut rhs);
    Ok(rhs)
}

/// Fully parabolic system: `u_t - Lap u = -div(u grad v)`,
/// `eps v_t - Lap v = a u - b v + chi g`.
pub fn solve_forward_pp(
    p: &KsParams,
    grid: &Grid,
    u0: &[f64],
    v0: &[f64],
    control: &Control,
    opts: &ForwardOptions,
) -> Result<StateTrajectory> {
    p.validate()?;
    grid.check(u0)?;
    grid.check(v0)?;
    control.check(grid)?;
    let mut u = SpaceTimeField::zeros(grid);
    let mut v = SpaceTimeField::zeros(grid);
    u.slice_mut(0).copy_from_slice(u0);
    v.slice_mut(0).copy_from_slice(v0);
    let dt = grid.dt();
    let shift = p.eps / dt + p.b;
    for k in 0..grid.steps() {
        let un = density_step(grid, u.slice(k), v.slice(k))?;
        check_blowup(&un, k + 1, opts.blowup_cap)?;
        let src = control.source(k + 1);
        let rhs: Field = (0..un.len())
            .map(|i| p.eps / dt * v.slice(k)[i] + p.a * un[i] + src[i])
            .collect();
        let vn = grid.solve_shifted(shift, &rhs)?;
        u.slice_mut(k + 1).copy_from_slice(&un);
        v.slice_mut(k + 1).copy_from_slice(&vn);
    }
    Ok(StateTrajectory { u, v, params: *p })
}

/// Chemical concentration in the elliptic limit: `-Lap v + b v = a u + chi g`.
pub fn elliptic_chemical(p: &KsParams, grid: &Grid, u: &[f64], source: &[f64]) -> Result<Field> {
    let rhs: Field = u.iter().zip(source).map(|(x, s)| p.a * x + s).collect();
    grid.solve_shifted(p.b, &rhs)
}

/// Parabolic-elliptic system; `v` is recomputed from `u` on every level.
pub fn solve_forward_pe(
    p: &KsParams,
    grid: &Grid,
    u0: &[f64],
    control: &Control,
    opts: &ForwardOptions,
) -> Result<StateTrajectory> {
    if !(p.a > 0.0) || !(p.b > 0.0) {
        return Err(Error::InvalidParameter("a and b must be positive".into()));
    }
    grid.check(u0)?;
    control.check(grid)?;
    let mut u = SpaceTimeField::zeros(grid);
    let mut v = SpaceTimeField::zeros(grid);
    u.slice_mut(0).copy_from_slice(u0);
    for k in 0..grid.steps() {
        let vk = elliptic_chemical(p, grid, u.slice(k), &control.source(k))?;
        v.slice_mut(k).copy_from_slice(&vk);
        let un = density_step(grid, u.slice(k), &vk)?;
        check_blowup(&un, k + 1, opts.blowup_cap)?;
        u.slice_mut(k + 1).copy_from_slice(&un);
    }
    let m = grid.steps();
    let vm = elliptic_chemical(p, grid, u.slice(m), &control.source(m))?;
    v.slice_mut(m).copy_from_slice(&vm);
    Ok(StateTrajectory { u, v, params: *p })
}

/// Absolute tolerance on the zero-mass preconditions, relative to the data scale.
pub const MASS_TOL: f64 = 1e-10;

pub(crate) fn check_zero_mass(f: &[f64], grid: &Grid, what: &'static str) -> Result<()> {
    let m = grid::inner(f, &vec![1.0; f.len()], grid);
    let scale = grid::l2_norm(f, grid).max(1.0);
    if m.abs() > MASS_TOL * scale {
        return Err(Error::MassConstraint { what, mass: m });
    }
    Ok(())
}

/// Linearization around `(M1, M2)`:
/// `z_t - Lap z = -M1 Lap w + h1`, `eps w_t - Lap w = a z - b w + chi g + h2`.
///
/// Sources are read at the new level of each step; `h1(t)` must have zero
/// mass on every level.
pub fn solve_linearized(
    p: &KsParams,
    grid: &Grid,
    z0: &[f64],
    w0: &[f64],
    control: &Control,
    h1: &SpaceTimeField,
    h2: &SpaceTimeField,
) -> Result<StateTrajectory> {
    p.validate()?;
    grid.check(z0)?;
    grid.check(w0)?;
    control.check(grid)?;
    h1.check(grid)?;
    h2.check(grid)?;
    check_zero_mass(z0, grid, "z0")?;
    for k in 1..=grid.steps() {
        check_zero_mass(h1.slice(k), grid, "h1(t)")?;
    }
    let mut z = SpaceTimeField::zeros(grid);
    let mut w = SpaceTimeField::zeros(grid);
    z.slice_mut(0).copy_from_slice(z0);
    w.slice_mut(0).copy_from_slice(w0);
    linearized_march(p, grid, &mut z, &mut w, |k, out| {
        out.copy_from_slice(h1.slice(k));
    }, |k, out| {
        let g = control.g.slice(k);
        let hh = h2.slice(k);
        for i in 0..out.len() {
            out[i] = control.chi[i] * g[i] + hh[i];
        }
    })?;
    Ok(StateTrajectory { u: z, v: w, params: *p })
}

/// Implicit-Euler march of the linearized system in cosine-mode space.
/// `src1(k, out)` and `src2(k, out)` write the nodal sources at level `k`.
pub(crate) fn linearized_march(
    p: &KsParams,
    grid: &Grid,
    z: &mut SpaceTimeField,
    w: &mut SpaceTimeField,
    mut src1: impl FnMut(usize, &mut [f64]),
    mut src2: impl FnMut(usize, &mut [f64]),
) -> Result<()> {
    let dt = grid.dt();
    let lam = grid.mode_eigenvalues();
    let n = grid.node_count();
    let mut zc = grid.to_modes(z.slice(0));
    let mut wc = grid.to_modes(w.slice(0));
    let mut buf = vec![0.0; n];
    for k in 1..=grid.steps() {
        src1(k, &mut buf);
        let s1 = grid.to_modes(&buf);
        src2(k, &mut buf);
        let s2 = grid.to_modes(&buf);
        for j in 0..n {
            let zn = (zc[j] / dt - p.m1 * lam[j] * wc[j] + s1[j]) / (1.0 / dt - lam[j]);
            let wn = (p.eps / dt * wc[j] + p.a * zn + s2[j]) / (p.eps / dt + p.b - lam[j]);
            zc[j] = zn;
            wc[j] = wn;
        }
        z.slice_mut(k).copy_from_slice(&grid.from_modes(&zc));
        w.slice_mut(k).copy_from_slice(&grid.from_modes(&wc));
    }
    Ok(())
}

/// Crank-Nicolson variant of [`solve_linearized`] (fully coupled, second
/// order in time) for convergence studies. Sources are averaged between levels.
pub fn solve_linearized_cn(
    p: &KsParams,
    grid: &Grid,
    z0: &[f64],
    w0: &[f64],
    control: &Control,
    h1: &SpaceTimeField,
    h2: &SpaceTimeField,
) -> Result<StateTrajectory> {
    p.validate()?;
    grid.check(z0)?;
    grid.check(w0)?;
    control.check(grid)?;
    let dt = grid.dt();
    let lam = grid.mode_eigenvalues();
    let n = grid.node_count();
    let mut z = SpaceTimeField::zeros(grid);
    let mut w = SpaceTimeField::zeros(grid);
    z.slice_mut(0).copy_from_slice(z0);
    w.slice_mut(0).copy_from_slice(w0);
    let mut zc = grid.to_modes(z0);
    let mut wc = grid.to_modes(w0);
    let src = |k: usize| -> (Field, Field) {
        let g = control.source(k);
        let s2: Field = g.iter().zip(h2.slice(k)).map(|(a, b)| a + b).collect();
        (grid.to_modes(h1.slice(k)), grid.to_modes(&s2))
    };
    let (mut s1_prev, mut s2_prev) = src(0);
    for k in 1..=grid.steps() {
        let (s1, s2) = src(k);
        for j in 0..n {
            // y' = J y + r with J = [[lam, -M1 lam], [a/eps, (lam - b)/eps]].
            let l = lam[j];
            let j11 = l;
            let j12 = -p.m1 * l;
            let j21 = p.a / p.eps;
            let j22 = (l - p.b) / p.eps;
            let r1 = 0.5 * (s1[j] + s1_prev[j]);
            let r2 = 0.5 * (s2[j] + s2_prev[j]) / p.eps;
            let h = 0.5 * dt;
            let b1 = zc[j] + h * (j11 * zc[j] + j12 * wc[j]) + dt * r1;
            let b2 = wc[j] + h * (j21 * zc[j] + j22 * wc[j]) + dt * r2;
            let (a11, a12, a21, a22) = (1.0 - h * j11, -h * j12, -h * j21, 1.0 - h * j22);
            let det = a11 * a22 - a12 * a21;
            zc[j] = (a22 * b1 - a12 * b2) / det;
            wc[j] = (a11 * b2 - a21 * b1) / det;
        }
        s1_prev = s1;
        s2_prev = s2;
        z.slice_mut(k).copy_from_slice(&grid.from_modes(&zc));
        w.slice_mut(k).copy_from_slice(&grid.from_modes(&wc));
    }
    Ok(StateTrajectory { u: z, v: w, params: *p })
}
