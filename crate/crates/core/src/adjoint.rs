//! Backward solver for the adjoint of the linearized system and the discrete
//! duality bookkeeping.
//!
//! The backward step is the algebraic transpose of the forward step in
//! [`crate::ks_model::solve_linearized`]. Writing one forward step as
//! `B y^{k+1} = D y^k + r^{k+1}` with
//!
//! ```text
//! B = [[I/dt - A, 0], [-a I, (eps/dt + b) I - A]]
//! D = [[I/dt, -M1 A], [0, eps/dt I]]
//! ```
//!
//! the adjoint step is `B^T p_j = D^T p_{j+1} + F_j`, i.e.
//! `((eps/dt + b) - A) xi_j = eps xi_{j+1}/dt - M1 A phi_{j+1} + f2_j` and then
//! `(I/dt - A) phi_j = phi_{j+1}/dt + a xi_j + f1_j`. Summing the steps gives
//!
//! ```text
//! dt sum_k <y^k, F_{k-1}> + [y^m, p_m] = [y^0, p_0] + dt sum_k <r^k, p_{k-1}>
//! ```
//!
//! with the level pairing `[y, p] = <z, phi> + eps <w, xi> - dt M1 <w, A phi>`.

use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid, SpaceTimeField};
use crate::ks_model::{Control, KsParams, StateTrajectory};

/// Projections of `phi_T` larger than this (relative to its norm) are
/// flagged in [`AdjointTrajectory::projection_warning`].
pub const PROJECTION_WARN: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub phi: SpaceTimeField,
    pub xi: SpaceTimeField,
    pub phi_t: Field,
    pub xi_t: Field,
    pub f1: SpaceTimeField,
    pub f2: SpaceTimeField,
    pub eps: f64,
    /// Mean subtracted from the supplied `phi_T` to make it zero-mass.
    pub mean_correction: f64,
}

impl AdjointTrajectory {
    pub fn projection_warning(&self) -> bool {
        self.mean_correction.abs() > PROJECTION_WARN
    }
}

/// Solve the adjoint system backward from `(phi_T, xi_T)`.
///
/// The source slice at level `j < m` drives the step from `t_{j+1}` to `t_j`;
/// the slice at level `m` is not used. `phi_T` is projected onto zero mass.
pub fn solve_adjoint(
    p: &KsParams,
    grid: &Grid,
    phi_t: &[f64],
    xi_t: &[f64],
    f1: &SpaceTimeField,
    f2: &SpaceTimeField,
) -> Result<AdjointTrajectory> {
    p.validate()?;
    grid.check(phi_t)?;
    grid.check(xi_t)?;
    f1.check(grid)?;
    f2.check(grid)?;
    let mut phi_end = phi_t.to_vec();
    let scale = grid::l2_norm(phi_t, grid).max(1.0);
    let mean_correction = grid::remove_mean(&mut phi_end, grid) / scale;
    let mut phi = SpaceTimeField::zeros(grid);
    let mut xi = SpaceTimeField::zeros(grid);
    phi.slice_mut(grid.steps()).copy_from_slice(&phi_end);
    xi.slice_mut(grid.steps()).copy_from_slice(xi_t);
    backward_march(
        p,
        grid,
        &mut phi,
        &mut xi,
        |j, out| out.copy_from_slice(f1.slice(j)),
        |j, out| out.copy_from_slice(f2.slice(j)),
    );
    Ok(AdjointTrajectory {
        phi,
        xi,
        phi_t: phi_end,
        xi_t: xi_t.to_vec(),
        f1: f1.clone(),
        f2: f2.clone(),
        eps: p.eps,
        mean_correction,
    })
}

/// Backward march in cosine-mode space starting from the data already stored
/// at the last level of `phi` and `xi`. `src1(j, out)`/`src2(j, out)` write the
/// nodal sources for the step ending at level `j`.
pub(crate) fn backward_march(
    p: &KsParams,
    grid: &Grid,
    phi: &mut SpaceTimeField,
    xi: &mut SpaceTimeField,
    mut src1: impl FnMut(usize, &mut [f64]),
    mut src2: impl FnMut(usize, &mut [f64]),
) {
    let dt = grid.dt();
    let lam = grid.mode_eigenvalues();
    let n = grid.node_count();
    let m = grid.steps();
    let mut pc = grid.to_modes(phi.slice(m));
    let mut xc = grid.to_modes(xi.slice(m));
    let mut buf = vec![0.0; n];
    for j in (0..m).rev() {
        src1(j, &mut buf);
        let s1 = grid.to_modes(&buf);
        src2(j, &mut buf);
        let s2 = grid.to_modes(&buf);
        for i in 0..n {
            let xn = (p.eps / dt * xc[i] - p.m1 * lam[i] * pc[i] + s2[i]) / (p.eps / dt + p.b - lam[i]);
            let pn = (pc[i] / dt + p.a * xn + s1[i]) / (1.0 / dt - lam[i]);
            xc[i] = xn;
            pc[i] = pn;
        }
        phi.slice_mut(j).copy_from_slice(&grid.from_modes(&pc));
        xi.slice_mut(j).copy_from_slice(&grid.from_modes(&xc));
    }
}

/// `[y, p] = <z, phi> + eps <w, xi> - dt M1 <w, Lap phi>`.
pub fn level_pairing(p: &KsParams, grid: &Grid, z: &[f64], w: &[f64], phi: &[f64], xi: &[f64]) -> f64 {
    let mut lap = vec![0.0; phi.len()];
    grid::laplacian_add(phi, grid, 1.0, &mut lap);
    grid::inner(z, phi, grid) + p.eps * grid::inner(w, xi, grid) - grid.dt() * p.m1 * grid::inner(w, &lap, grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityGap {
    /// `|lhs - rhs|` of the discrete transposition identity.
    pub absolute: f64,
    /// Sum of the magnitudes of the individual terms.
    pub scale: f64,
}

impl DualityGap {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.absolute
        } else {
            self.absolute / self.scale
        }
    }
}

/// Evaluate the discrete transposition identity between a linearized
/// trajectory driven by `(control, h1, h2)` and an adjoint trajectory.
pub fn duality_gap(
    grid: &Grid,
    primal: &StateTrajectory,
    adj: &AdjointTrajectory,
    control: &Control,
    h1: &SpaceTimeField,
    h2: &SpaceTimeField,
) -> Result<DualityGap> {
    primal.u.check(grid)?;
    adj.phi.check(grid)?;
    h1.check(grid)?;
    h2.check(grid)?;
    let p = &primal.params;
    if p.eps != adj.eps {
        return Err(Error::ParameterMismatch(format!(
            "primal eps = {} but adjoint eps = {}",
            p.eps, adj.eps
        )));
    }
    let dt = grid.dt();
    let m = grid.steps();
    let mut terms = Vec::with_capacity(4 * m + 2);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for k in 1..=m {
        let t = dt * (grid::inner(primal.u.slice(k), adj.f1.slice(k - 1), grid)
            + grid::inner(primal.v.slice(k), adj.f2.slice(k - 1), grid));
        lhs += t;
        terms.push(t);
        let src = control.source(k);
        let a = dt * grid::inner(h1.slice(k), adj.phi.slice(k - 1), grid);
        let b = dt * grid::inner(h2.slice(k), adj.xi.slice(k - 1), grid);
        let c = dt * grid::inner(&src, adj.xi.slice(k - 1), grid);
        rhs += a + b + c;
        terms.extend([a, b, c]);
    }
    let term_end = level_pairing(p, grid, primal.u.slice(m), primal.v.slice(m), adj.phi.slice(m), adj.xi.slice(m));
    let term_start = level_pairing(p, grid, primal.u.slice(0), primal.v.slice(0), adj.phi.slice(0), adj.xi.slice(0));
    lhs += term_end;
    rhs += term_start;
    terms.extend([term_end, term_start]);
    Ok(DualityGap {
        absolute: (lhs - rhs).abs(),
        scale: terms.iter().map(|t| t.abs()).sum(),
    })
}
