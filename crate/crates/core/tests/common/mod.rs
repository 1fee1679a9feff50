//! Helpers shared by the oracle tests and the acceptance runner.
#![allow(dead_code)]

use ks_control::adjoint::solve_adjoint;
use ks_control::grid::{self, Field, Grid, SpaceTimeField};
use ks_control::hum_control::{ControlProblem, DualSolution, HumWeights};
use ks_control::ks_model::{build_cutoff, solve_linearized, solve_linearized_cn, Control, KsParams};
use ks_control::weights::{ControlRegions, Subdomain};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn regions() -> ControlRegions {
    ControlRegions {
        omega0: Subdomain::interval(0.3, 0.4),
        omega_prime: Subdomain::interval(0.25, 0.45),
        omega: Subdomain::interval(0.2, 0.5),
    }
}

pub fn chi(g: &Grid) -> Field {
    build_cutoff(g, &regions()).unwrap()
}

/// Coefficient of `cos(pi x)` in a nodal field and the size of the rest.
pub fn mode_error(f: &[f64], g: &Grid, c: f64) -> f64 {
    let e: Field = f
        .iter()
        .enumerate()
        .map(|(i, x)| x - c * (PI * g.coords(i)[0]).cos())
        .collect();
    grid::l2_norm(&e, g)
}

/// Semi-discrete generator of the forward system on one mode with Laplacian
/// eigenvalue `-mu`.
pub fn forward_generator(p: &KsParams, mu: f64) -> Matrix2<f64> {
    Matrix2::new(-mu, p.m1 * mu, p.a / p.eps, -(mu + p.b) / p.eps)
}

/// Same for the adjoint run backward in time.
pub fn adjoint_generator(p: &KsParams, mu: f64) -> Matrix2<f64> {
    Matrix2::new(-mu, p.a, p.m1 * mu / p.eps, -(mu + p.b) / p.eps)
}

pub fn discrete_mu(h: f64) -> f64 {
    4.0 / (h * h) * (0.5 * PI * h).sin().powi(2)
}

pub fn forward_mode_error(p: &KsParams, n: usize, m: usize, t: f64, cn: bool, exact: Vector2<f64>) -> f64 {
    let g = Grid::one_d(1.0, n, t, m).unwrap();
    let y0 = Vector2::new(1.0, 0.5);
    let z0 = g.sample(|[x, _]| y0[0] * (PI * x).cos());
    let w0 = g.sample(|[x, _]| y0[1] * (PI * x).cos());
    let zero = SpaceTimeField::zeros(&g);
    let ctl = Control::zero(&g, chi(&g));
    let tr = if cn {
        solve_linearized_cn(p, &g, &z0, &w0, &ctl, &zero, &zero).unwrap()
    } else {
        solve_linearized(p, &g, &z0, &w0, &ctl, &zero, &zero).unwrap()
    };
    let (zt, wt) = tr.terminal();
    mode_error(zt, &g, exact[0]) + mode_error(wt, &g, exact[1])
}

pub fn adjoint_mode_error(p: &KsParams, n: usize, m: usize, t: f64, exact: Vector2<f64>) -> f64 {
    let g = Grid::one_d(1.0, n, t, m).unwrap();
    let phi_t = g.sample(|[x, _]| (PI * x).cos());
    let xi_t = g.sample(|[x, _]| 0.5 * (PI * x).cos());
    let zero = SpaceTimeField::zeros(&g);
    let a = solve_adjoint(p, &g, &phi_t, &xi_t, &zero, &zero).unwrap();
    mode_error(a.phi.slice(0), &g, exact[0]) + mode_error(a.xi.slice(0), &g, exact[1])
}

/// Implicit-Euler recurrence with lagged coupling for one mode, evaluated
/// with the exact eigenvalue; isolates the spatial error of the solvers.
pub fn forward_recurrence(p: &KsParams, mu: f64, m: usize, t: f64, y0: Vector2<f64>) -> Vector2<f64> {
    let dt = t / m as f64;
    let (mut z, mut w) = (y0[0], y0[1]);
    for _ in 0..m {
        z = (z / dt + p.m1 * mu * w) / (1.0 / dt + mu);
        w = (p.eps * w / dt + p.a * z) / (p.eps / dt + p.b + mu);
    }
    Vector2::new(z, w)
}

pub fn adjoint_recurrence(p: &KsParams, mu: f64, m: usize, t: f64, y0: Vector2<f64>) -> Vector2<f64> {
    let dt = t / m as f64;
    let (mut phi, mut xi) = (y0[0], y0[1]);
    for _ in 0..m {
        xi = (p.eps * xi / dt + p.m1 * mu * phi) / (p.eps / dt + p.b + mu);
        phi = (phi / dt + p.a * xi) / (1.0 / dt + mu);
    }
    Vector2::new(phi, xi)
}

pub fn ratios(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| w[0] / w[1]).collect()
}


pub fn random_field(g: &Grid, rng: &mut ChaCha8Rng, zero_mean: bool) -> Field {
    let mut f: Field = (0..g.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    if zero_mean {
        grid::remove_mean(&mut f, g);
    }
    f
}

pub fn random_spacetime(g: &Grid, rng: &mut ChaCha8Rng, zero_mean: bool) -> SpaceTimeField {
    let levels: Vec<Field> = (0..=g.steps()).map(|_| random_field(g, rng, zero_mean)).collect();
    SpaceTimeField::from_fn(g, |k| levels[k].clone())
}


/// A few low cosine modes with random amplitudes.
pub fn smooth_field(g: &Grid, rng: &mut ChaCha8Rng, zero_mean: bool) -> Field {
    let amps: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut f = g.sample(|[x, _]| amps.iter().enumerate().map(|(k, a)| a * (k as f64 * PI * x).cos()).sum());
    if zero_mean {
        grid::remove_mean(&mut f, g);
    }
    f
}

/// Smooth in space and time: a smooth field times a random trigonometric profile.
pub fn smooth_spacetime(g: &Grid, rng: &mut ChaCha8Rng, zero_mean: bool) -> SpaceTimeField {
    let f = smooth_field(g, rng, zero_mean);
    let (a, b, c) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let tf = g.t_final();
    SpaceTimeField::separable(g, &f, |t| a + b * (PI * t / tf).cos() + c * (PI * t / tf).sin())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Assemble the quadratic functional of the weighted dual problem densely,
/// solve it by Cholesky and return the relative distance to `dual`.
pub fn dense_dual_distance(pb: &ControlProblem, dual: &DualSolution) -> f64 {
    let (g, p, tau, eps) = (&pb.grid, &pb.params, pb.tau, pb.params.eps);
    let (weights, chi, z0, w0) = (&pb.weights, &pb.chi, &pb.z0, &pb.w0);
    let m = g.steps();
    let nn = g.node_count();
    let dt = g.dt();
    let q = g.quadrature().to_vec();
    let hw = HumWeights::new(weights, tau).unwrap();
    // Zero-mean basis for phi_T: e_i - (q_i / q_0) e_0.
    let basis_phi = |i: usize| -> Field {
        let mut f = vec![0.0; nn];
        f[i + 1] = 1.0;
        f[0] = -q[i + 1] / q[0];
        f
    };
    let nf = m * nn;
    let dim = 2 * nf + (nn - 1) + nn;
    let unpack = |x: &[f64]| -> (SpaceTimeField, SpaceTimeField, Field, Field) {
        let mut f1 = SpaceTimeField::zeros(g);
        let mut f2 = SpaceTimeField::zeros(g);
        for j in 0..m {
            f1.slice_mut(j).copy_from_slice(&x[j * nn..(j + 1) * nn]);
            f2.slice_mut(j).copy_from_slice(&x[nf + j * nn..nf + (j + 1) * nn]);
        }
        let mut phi_t = vec![0.0; nn];
        for i in 0..nn - 1 {
            let c = x[2 * nf + i];
            if c != 0.0 {
                for (o, b) in phi_t.iter_mut().zip(basis_phi(i)) {
                    *o += c * b;
                }
            }
        }
        let xi_t = x[2 * nf + nn - 1..].to_vec();
        (f1, f2, phi_t, xi_t)
    };

    // Observation map X -> sqrt(dt rho0 q) chi xi_j, j < m.
    let mut obs = DMatrix::<f64>::zeros(m * nn, dim);
    let mut e = vec![0.0; dim];
    for col in 0..dim {
        e[col] = 1.0;
        let (f1, f2, phi_t, xi_t) = unpack(&e);
        let a = solve_adjoint(p, g, &phi_t, &xi_t, &f1, &f2).unwrap();
        for j in 0..m {
            let c = (dt * hw.rho_g(j + 1)).sqrt();
            for i in 0..nn {
                obs[(j * nn + i, col)] = c * q[i].sqrt() * chi[i] * a.xi.slice(j)[i];
            }
        }
        e[col] = 0.0;
    }
    let mut h = obs.transpose() * &obs;
    for j in 0..m {
        for i in 0..nn {
            h[(j * nn + i, j * nn + i)] += dt * hw.rho_u(j + 1) * q[i];
            h[(nf + j * nn + i, nf + j * nn + i)] += dt * hw.rho_v(j + 1) * q[i];
        }
    }
    for a in 0..nn - 1 {
        for b in 0..nn - 1 {
            let (ba, bb) = (basis_phi(a), basis_phi(b));
            h[(2 * nf + a, 2 * nf + b)] += tau * grid::inner(&ba, &bb, g);
        }
    }
    for i in 0..nn {
        h[(2 * nf + nn - 1 + i, 2 * nf + nn - 1 + i)] += tau * eps * q[i];
    }

    // Linear term: the data paired with the adjoint, via the free trajectory.
    let free = solve_linearized(p, g, z0, w0, &Control::zero(g, chi.clone()), &pb.h1, &pb.h2).unwrap();
    let mut rhs = DVector::<f64>::zeros(dim);
    for j in 0..m {
        for i in 0..nn {
            rhs[j * nn + i] = dt * q[i] * free.u.slice(j + 1)[i];
            rhs[nf + j * nn + i] = dt * q[i] * free.v.slice(j + 1)[i];
        }
    }
    let (zm, wm) = free.terminal();
    let lap_w = grid::neumann_laplacian(wm, g).unwrap();
    let tz: Field = zm.iter().zip(&lap_w).map(|(z, l)| z - dt * p.m1 * l).collect();
    for a in 0..nn - 1 {
        rhs[2 * nf + a] = grid::inner(&tz, &basis_phi(a), g);
    }
    for i in 0..nn {
        rhs[2 * nf + nn - 1 + i] = eps * q[i] * wm[i];
    }
    let x = h.cholesky().expect("positive definite").solve(&rhs);
    let (f1, f2, phi_t, xi_t) = unpack(x.as_slice());

    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..m {
        for i in 0..nn {
            num += (f1.slice(j)[i] - dual.f1.slice(j)[i]).powi(2) + (f2.slice(j)[i] - dual.f2.slice(j)[i]).powi(2);
            den += f1.slice(j)[i].powi(2) + f2.slice(j)[i].powi(2);
        }
    }
    for i in 0..nn {
        num += (phi_t[i] - dual.phi_t[i]).powi(2) + (xi_t[i] - dual.xi_t[i]).powi(2);
        den += phi_t[i].powi(2) + xi_t[i].powi(2);
    }
    let rel = (num / den).sqrt();
    rel
}
