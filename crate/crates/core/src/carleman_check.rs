//! Numerical evaluation of both sides of the weighted energy inequalities on
//! sampled adjoint and heat solutions.
//!
//! Every weighted integral is accumulated in the log domain: the weights
//! `e^{2 s alpha} phi^k` range over hundreds of orders of magnitude and vanish
//! at the singular time levels, so sums are formed with a streaming
//! log-sum-exp and compared through `log_lhs - log_rhs`.

use crate::adjoint::{solve_adjoint, AdjointTrajectory};
use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid, SpaceTimeField};
use crate::ks_model::KsParams;
use crate::weights::{
    carleman_weights, refined_weights, Eta0, Subdomain, WeightFamily, WeightKind, WeightParams, WeightTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Number of low Neumann modes used to build random samples.
pub const SAMPLE_MODES: usize = 8;

/// Streaming `ln(sum exp(x_i))`.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    sum: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSum {
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    pub fn merge(&mut self, o: LogSum) {
        if o.max == f64::NEG_INFINITY {
            return;
        }
        if o.max > self.max {
            self.sum = self.sum * (self.max - o.max).exp() + o.sum;
            self.max = o.max;
        } else {
            self.sum += o.sum * (o.max - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Time quadrature over the levels; `interior` drops both endpoints,
/// otherwise the trapezoid rule is used.
fn time_weight(grid: &Grid, k: usize, interior: bool) -> f64 {
    let m = grid.steps();
    if k == 0 || k == m {
        if interior {
            0.0
        } else {
            0.5 * grid.dt()
        }
    } else {
        grid.dt()
    }
}

/// `ln sum_{k,i} dt_k w_i e^{lw(i,k)} f(i,k)^2` over the selected nodes.
fn log_integral(
    grid: &Grid,
    interior: bool,
    mask: Option<&[bool]>,
    mut lw: impl FnMut(usize, usize) -> f64,
    mut f: impl FnMut(usize, usize) -> f64,
) -> f64 {
    let q = grid.quadrature();
    let mut acc = LogSum::default();
    for k in 0..=grid.steps() {
        let tw = time_weight(grid, k, interior);
        if tw == 0.0 {
            continue;
        }
        for i in 0..grid.node_count() {
            if mask.is_some_and(|m| !m[i]) {
                continue;
            }
            let v = f(i, k);
            if v == 0.0 {
                continue;
            }
            acc.add((tw * q[i]).ln() + lw(i, k) + (v * v).ln());
        }
    }
    acc.value()
}

/// `ln` of `sum_k dt_k <e^{lw} g_k, g_k>` where `g_k` is a list of fields per
/// level (e.g. derivative components), summed over components.
fn log_integral_fields(grid: &Grid, interior: bool, mask: Option<&[bool]>, lw: &dyn Fn(usize, usize) -> f64, parts: &[SpaceTimeField]) -> f64 {
    let mut acc = LogSum::default();
    for part in parts {
        acc.add(log_integral(grid, interior, mask, lw, |i, k| part.slice(k)[i]));
    }
    acc.value()
}

/// `ln(s^spow e^{2 s w} base^power)` as a function of `(node, level)`.
fn lw<W: WeightFamily>(w: &W, kind: WeightKind, power: f64, spow: f64) -> impl Fn(usize, usize) -> f64 + '_ {
    let ls = spow * w.params().s.ln();
    move |i, k| ls + w.log_weight_scaled(kind, 2.0, power, i, k)
}

/// Pointwise weight with matching powers of `s` and the base.
fn pointwise<W: WeightFamily>(w: &W, c: f64) -> impl Fn(usize, usize) -> f64 + '_ {
    lw(w, WeightKind::Pointwise, c, c)
}

/// Centered derivatives of `q` on every level: gradient components,
/// second derivatives `d_ij` (all ordered pairs) and the centered time
/// derivative (zero at the end levels).
struct Derivatives {
    grad: Vec<SpaceTimeField>,
    hess: Vec<SpaceTimeField>,
    dt: SpaceTimeField,
}

fn derivatives(q: &SpaceTimeField, grid: &Grid) -> Derivatives {
    let dim = grid.dim();
    let levels = grid.steps() + 1;
    let mut grad = vec![SpaceTimeField::zeros(grid); dim];
    let mut hess = vec![SpaceTimeField::zeros(grid); dim * dim];
    for k in 0..levels {
        let f = q.slice(k);
        for a in 0..dim {
            let g = grid::centered_difference(f, grid, a);
            for b in 0..dim {
                let d = if a == b {
                    grid::second_difference(f, grid, a)
                } else {
                    grid::centered_difference(&g, grid, b)
                };
                hess[a * dim + b].slice_mut(k).copy_from_slice(&d);
            }
            grad[a].slice_mut(k).copy_from_slice(&g);
        }
    }
    let mut dtf = SpaceTimeField::zeros(grid);
    let h = 2.0 * grid.dt();
    for k in 1..levels - 1 {
        let (a, b) = (q.slice(k + 1).to_vec(), q.slice(k - 1).to_vec());
        for (o, (x, y)) in dtf.slice_mut(k).iter_mut().zip(a.iter().zip(&b)) {
            *o = (x - y) / h;
        }
    }
    Derivatives { grad, hess, dt: dtf }
}

/// `ln I_beta(s, sigma; q)` with the pointwise weights of `w`, over interior
/// time levels.
pub fn log_i_beta(q: &SpaceTimeField, beta: f64, sigma: f64, w: &WeightTable, grid: &Grid) -> Result<f64> {
    q.check(grid)?;
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidParameter(format!("sigma must lie in (0, 1], got {sigma}")));
    }
    let d = derivatives(q, grid);
        let mut acc = LogSum::default();
    acc.add(log_integral_fields(grid, true, None, &pointwise(w, beta + 3.0), std::slice::from_ref(q)));
    acc.add(log_integral_fields(grid, true, None, &pointwise(w, beta + 1.0), &d.grad));
    let mut top = d.hess;
    let mut qt = d.dt;
    qt.scale(sigma);
    top.push(qt);
    acc.add(log_integral_fields(grid, true, None, &pointwise(w, beta - 1.0), &top));
    Ok(acc.value())
}

/// `I_beta(s, sigma; q)`; may underflow to zero, see [`log_i_beta`].
pub fn i_beta(q: &SpaceTimeField, beta: f64, sigma: f64, w: &WeightTable, grid: &Grid) -> Result<f64> {
    Ok(log_i_beta(q, beta, sigma, w, grid)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Inequality {
    #[serde(rename = "thm2.2")]
    Theorem22,
    #[serde(rename = "lem2.1")]
    Lemma21,
    #[serde(rename = "lem3.1")]
    Lemma31,
    #[serde(rename = "lemA.1")]
    LemmaA1,
}

impl Inequality {
    pub fn id(&self) -> &'static str {
        match self {
            Inequality::Theorem22 => "thm2.2",
            Inequality::Lemma21 => "lem2.1",
            Inequality::Lemma31 => "lem3.1",
            Inequality::LemmaA1 => "lemA.1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarlemanRow {
    pub sample_id: usize,
    pub s: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
}

impl CarlemanRow {
    pub fn lhs(&self) -> f64 {
        self.log_lhs.exp()
    }

    pub fn rhs(&self) -> f64 {
        self.log_rhs.exp()
    }

    /// `lhs / rhs`; 0 when both vanish, `inf` on a falsification.
    pub fn ratio(&self) -> f64 {
        if self.log_lhs == f64::NEG_INFINITY {
            0.0
        } else {
            (self.log_lhs - self.log_rhs).exp()
        }
    }

    /// Positive left side with a vanishing right side.
    pub fn is_falsification(&self) -> bool {
        self.log_lhs > f64::NEG_INFINITY && self.log_rhs == f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarlemanReport {
    pub inequality: Inequality,
    pub lambda: f64,
    /// Relaxation parameter of the sampled system, if it has one.
    pub eps: Option<f64>,
    pub rows: Vec<CarlemanRow>,
}

impl CarlemanReport {
    /// `(s, max ratio)` for every `s`, in the order first seen.
    pub fn constants(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for r in &self.rows {
            match out.iter_mut().find(|(s, _)| *s == r.s) {
                Some(e) => e.1 = e.1.max(r.ratio()),
                None => out.push((r.s, r.ratio())),
            }
        }
        out
    }

    pub fn falsifications(&self) -> usize {
        self.rows.iter().filter(|r| r.is_falsification()).count()
    }
}

fn modes(grid: &Grid, count: usize, skip_constant: bool) -> Vec<Field> {
    let l = grid.lengths();
    let n = grid.intervals();
    let mut keys: Vec<(f64, usize, usize)> = Vec::new();
    let ny = if grid.dim() == 2 { n[1] } else { 0 };
    for kx in 0..=n[0] {
        for ky in 0..=ny {
            let mut e = (kx as f64 / l[0]).powi(2);
            if grid.dim() == 2 {
                e += (ky as f64 / l[1]).powi(2);
            }
            keys.push((e, kx, ky));
        }
    }
    keys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    keys.into_iter()
        .filter(|(e, _, _)| !(skip_constant && *e == 0.0))
        .take(count)
        .map(|(_, kx, ky)| grid.cosine_mode(kx, ky))
        .collect()
}

fn random_field(grid: &Grid, basis: &[Field], rng: &mut ChaCha8Rng) -> Field {
    let mut out = grid.zeros();
    for b in basis {
        let c: f64 = rng.random_range(-1.0..1.0);
        for (o, x) in out.iter_mut().zip(b) {
            *o += c * x;
        }
    }
    out
}

/// Random field of the first modes with smooth random time profiles
/// `a + b cos(pi t/T) + c sin(pi t/T)` per mode.
fn random_spacetime(grid: &Grid, basis: &[Field], rng: &mut ChaCha8Rng) -> SpaceTimeField {
    let tf = grid.t_final();
    let coefs: Vec<[f64; 3]> = basis
        .iter()
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    SpaceTimeField::from_fn(grid, |k| {
        let th = std::f64::consts::PI * grid.time(k) / tf;
        let mut out = grid.zeros();
        for (b, c) in basis.iter().zip(&coefs) {
            let a = c[0] + c[1] * th.cos() + c[2] * th.sin();
            for (o, x) in out.iter_mut().zip(b) {
                *o += a * x;
            }
        }
        out
    })
}

fn map_samples<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Random adjoint solutions: zero-mean terminal `phi_T`, arbitrary `xi_T`,
/// sources from the first [`SAMPLE_MODES`] modes. Sample `j` uses seed
/// `seed + j`, so the set does not depend on the thread count.
pub fn adjoint_samples(p: &KsParams, grid: &Grid, count: usize, seed: u64) -> Result<Vec<AdjointTrajectory>> {
    let zm = modes(grid, SAMPLE_MODES, true);
    let all = modes(grid, SAMPLE_MODES, false);
    map_samples(count, |j| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(j as u64));
        let phi_t = random_field(grid, &zm, &mut rng);
        let xi_t = random_field(grid, &all, &mut rng);
        let f1 = random_spacetime(grid, &all, &mut rng);
        let f2 = random_spacetime(grid, &all, &mut rng);
        solve_adjoint(p, grid, &phi_t, &xi_t, &f1, &f2)
    })
}

/// Solution of the backward heat problem `-phi_t - Lap phi = Lap g`,
/// `phi(T) = phi_T`, by implicit Euler.
#[derive(Debug, Clone)]
pub struct HeatSample {
    pub phi: SpaceTimeField,
    pub g: SpaceTimeField,
}

pub fn backward_heat(grid: &Grid, phi_t: &[f64], g: &SpaceTimeField) -> Result<HeatSample> {
    grid.check(phi_t)?;
    g.check(grid)?;
    let m = grid.steps();
    let inv_dt = 1.0 / grid.dt();
    let mut phi = SpaceTimeField::zeros(grid);
    phi.slice_mut(m).copy_from_slice(phi_t);
    for j in (0..m).rev() {
        let mut rhs: Field = phi.slice(j + 1).iter().map(|x| x * inv_dt).collect();
        grid::laplacian_add(g.slice(j), grid, 1.0, &mut rhs);
        let next = grid.solve_shifted(inv_dt, &rhs)?;
        phi.slice_mut(j).copy_from_slice(&next);
    }
    Ok(HeatSample { phi, g: g.clone() })
}

pub fn heat_samples(grid: &Grid, count: usize, seed: u64) -> Result<Vec<HeatSample>> {
    let zm = modes(grid, SAMPLE_MODES, true);
    let all = modes(grid, SAMPLE_MODES, false);
    map_samples(count, |j| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(j as u64));
        let phi_t = random_field(grid, &zm, &mut rng);
        let g = random_spacetime(grid, &all, &mut rng);
        backward_heat(grid, &phi_t, &g)
    })
}

/// Forward heat solution `sigma q_t - Lap q = f`, `q(0) = q0`, by implicit Euler.
#[derive(Debug, Clone)]
pub struct ForwardHeatSample {
    pub q: SpaceTimeField,
    pub f: SpaceTimeField,
    pub sigma: f64,
}

pub fn forward_heat(grid: &Grid, q0: &[f64], f: &SpaceTimeField, sigma: f64) -> Result<ForwardHeatSample> {
    grid.check(q0)?;
    f.check(grid)?;
    let c = sigma / grid.dt();
    let mut q = SpaceTimeField::zeros(grid);
    q.slice_mut(0).copy_from_slice(q0);
    for k in 0..grid.steps() {
        let rhs: Field = q.slice(k).iter().zip(f.slice(k + 1)).map(|(a, b)| c * a + b).collect();
        let next = grid.solve_shifted(c, &rhs)?;
        q.slice_mut(k + 1).copy_from_slice(&next);
    }
    Ok(ForwardHeatSample { q, f: f.clone(), sigma })
}

pub fn forward_heat_samples(grid: &Grid, sigma: f64, count: usize, seed: u64) -> Result<Vec<ForwardHeatSample>> {
    let all = modes(grid, SAMPLE_MODES, false);
    map_samples(count, |j| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(j as u64));
        let q0 = random_field(grid, &all, &mut rng);
        let f = random_spacetime(grid, &all, &mut rng);
        forward_heat(grid, &q0, &f, sigma)
    })
}

fn region_mask(grid: &Grid, region: &Subdomain) -> Vec<bool> {
    (0..grid.node_count())
        .map(|i| region.contains(grid.coords(i), grid.dim()))
        .collect()
}

fn evaluate<T: Sync>(
    samples: &[T],
    s_list: &[f64],
    eval: impl Fn(&T, f64) -> Result<(f64, f64)> + Sync + Send,
) -> Result<Vec<CarlemanRow>> {
    let per_sample = map_samples(samples.len(), |j| {
        s_list
            .iter()
            .map(|&s| {
                let (log_lhs, log_rhs) = eval(&samples[j], s)?;
                Ok(CarlemanRow {
                    sample_id: j,
                    s,
                    log_lhs,
                    log_rhs,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    // Rows ordered by s, then sample.
    let mut rows: Vec<CarlemanRow> = per_sample.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        let ia = s_list.iter().position(|x| *x == a.s).unwrap();
        let ib = s_list.iter().position(|x| *x == b.s).unwrap();
        ia.cmp(&ib).then(a.sample_id.cmp(&b.sample_id))
    });
    Ok(rows)
}

fn check_s_list(s_list: &[f64]) -> Result<()> {
    if s_list.is_empty() || s_list.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter("s values must be positive and non-empty".into()));
    }
    Ok(())
}

fn laplacians(f: &SpaceTimeField, grid: &Grid) -> SpaceTimeField {
    SpaceTimeField::from_fn(grid, |k| {
        let mut out = grid.zeros();
        grid::laplacian_add(f.slice(k), grid, 1.0, &mut out);
        out
    })
}

/// Left and right sides of the coupled-system inequality with the
/// pointwise weights: `s^3 |Lap phi|^2_{3} + I_1(eps, s; xi)` against the
/// observation of `xi` on `omega'` and the two sources.
pub fn theorem22_report(
    p: &KsParams,
    grid: &Grid,
    eta0: &Eta0,
    samples: &[AdjointTrajectory],
    s_list: &[f64],
    lambda: f64,
) -> Result<CarlemanReport> {
    check_s_list(s_list)?;
    let mask = region_mask(grid, &eta0.regions.omega_prime);
    let rows = evaluate(samples, s_list, |a, s| {
        if a.eps != p.eps {
            return Err(Error::ParameterMismatch("sample eps differs from report eps".into()));
        }
        let w = carleman_weights(eta0, &WeightParams::new(s, lambda, grid.t_final())?, grid);
        let lap = laplacians(&a.phi, grid);
        let mut lhs = LogSum::default();
        lhs.add(log_integral_fields(grid, true, None, &pointwise(&w, 3.0), std::slice::from_ref(&lap)));
        lhs.add(log_i_beta(&a.xi, 1.0, p.eps, &w, grid)?);
        let mut rhs = LogSum::default();
        rhs.add(log_integral_fields(grid, true, Some(&mask), &pointwise(&w, 18.0), std::slice::from_ref(&a.xi)));
        rhs.add(source_integral(grid, &a.f1, &pointwise(&w, 10.0)));
        rhs.add(source_integral(grid, &a.f2, &pointwise(&w, 3.0)));
        Ok((lhs.value(), rhs.value()))
    })?;
    Ok(CarlemanReport {
        inequality: Inequality::Theorem22,
        lambda,
        eps: Some(p.eps),
        rows,
    })
}

/// Adjoint sources live on levels `0..m` and drive the step ending at their
/// level, so their integral is a left-endpoint sum over `0..m-1`.
fn source_integral(grid: &Grid, f: &SpaceTimeField, lw: &dyn Fn(usize, usize) -> f64) -> f64 {
    let q = grid.quadrature();
    let dt = grid.dt();
    let mut acc = LogSum::default();
    for k in 0..grid.steps() {
        for i in 0..grid.node_count() {
            let v = f.slice(k)[i];
            if v != 0.0 {
                acc.add((dt * q[i]).ln() + lw(i, k) + (v * v).ln());
            }
        }
    }
    acc.value()
}

/// Inequality with the truncated-profile weights, whose left side includes
/// the mean-free parts of `phi` and the values at `t = 0`.
pub fn lemma31_report(
    p: &KsParams,
    grid: &Grid,
    eta0: &Eta0,
    chi: &[f64],
    samples: &[AdjointTrajectory],
    s_list: &[f64],
    lambda: f64,
) -> Result<CarlemanReport> {
    check_s_list(s_list)?;
    grid.check(chi)?;
    let rows = evaluate(samples, s_list, |a, s| {
        if a.eps != p.eps {
            return Err(Error::ParameterMismatch("sample eps differs from report eps".into()));
        }
        let w = refined_weights(eta0, &WeightParams::new(s, lambda, grid.t_final())?, grid);
        let dim = grid.dim();
        let grad = |f: &SpaceTimeField| -> Vec<SpaceTimeField> {
            (0..dim)
                .map(|ax| SpaceTimeField::from_fn(grid, |k| grid::centered_difference(f.slice(k), grid, ax)))
                .collect()
        };
        let centered_phi = SpaceTimeField::from_fn(grid, |k| {
            let mut f = a.phi.slice(k).to_vec();
            grid::remove_mean(&mut f, grid);
            f
        });
        let mut lhs = LogSum::default();
        lhs.add(log_integral_fields(grid, false, None, &lw(&w, WeightKind::Pointwise, 4.0, 0.0), std::slice::from_ref(&a.xi)));
        lhs.add(log_integral_fields(grid, false, None, &lw(&w, WeightKind::Pointwise, 2.0, 0.0), &grad(&a.xi)));
        lhs.add(log_integral_fields(grid, false, None, &lw(&w, WeightKind::Hat, 3.0, 0.0), std::slice::from_ref(&centered_phi)));
        lhs.add(log_integral_fields(grid, false, None, &lw(&w, WeightKind::Hat, 3.0, 0.0), &grad(&a.phi)));
        let n0 = grid::inner(centered_phi.slice(0), centered_phi.slice(0), grid);
        if n0 > 0.0 {
            lhs.add(n0.ln());
        }
        let x0 = a.eps * grid::inner(a.xi.slice(0), a.xi.slice(0), grid);
        if x0 > 0.0 {
            lhs.add(x0.ln());
        }
        let mut rhs = LogSum::default();
        rhs.add(source_integral(grid, &a.f1, &lw(&w, WeightKind::Star, 10.0, 0.0)));
        rhs.add(source_integral(grid, &a.f2, &lw(&w, WeightKind::Star, 3.0, 0.0)));
        let chi_xi = SpaceTimeField::from_fn(grid, |k| a.xi.slice(k).iter().zip(chi).map(|(x, c)| x * c).collect());
        rhs.add(log_integral_fields(grid, false, None, &lw(&w, WeightKind::Star, 18.0, 0.0), std::slice::from_ref(&chi_xi)));
        Ok((lhs.value(), rhs.value()))
    })?;
    Ok(CarlemanReport {
        inequality: Inequality::Lemma31,
        lambda,
        eps: Some(p.eps),
        rows,
    })
}

/// Inequality for the backward heat equation with a divergence-form source,
/// observed on `omega`.
pub fn lemma_a1_report(
    grid: &Grid,
    eta0: &Eta0,
    samples: &[HeatSample],
    s_list: &[f64],
    lambda: f64,
) -> Result<CarlemanReport> {
    check_s_list(s_list)?;
    let mask = region_mask(grid, &eta0.regions.omega);
    let rows = evaluate(samples, s_list, |h, s| {
        let w = carleman_weights(eta0, &WeightParams::new(s, lambda, grid.t_final())?, grid);
        let lhs = log_integral_fields(grid, true, None, &pointwise(&w, 3.0), std::slice::from_ref(&h.phi));
        let mut rhs = LogSum::default();
        rhs.add(log_integral_fields(grid, true, Some(&mask), &pointwise(&w, 3.0), std::slice::from_ref(&h.phi)));
        rhs.add(log_integral_fields(grid, true, None, &pointwise(&w, 4.0), std::slice::from_ref(&h.g)));
        Ok((lhs, rhs.value()))
    })?;
    Ok(CarlemanReport {
        inequality: Inequality::LemmaA1,
        lambda,
        eps: None,
        rows,
    })
}

/// Heat-equation inequality `I_beta(s, sigma; q) <= C (s^beta |f|^2_beta +
/// s^{beta+3} |q|^2_{beta+3, omega'})`.
pub fn lemma21_report(
    grid: &Grid,
    eta0: &Eta0,
    samples: &[ForwardHeatSample],
    beta: f64,
    s_list: &[f64],
    lambda: f64,
) -> Result<CarlemanReport> {
    check_s_list(s_list)?;
    let mask = region_mask(grid, &eta0.regions.omega_prime);
    let sigma = samples.first().map_or(1.0, |h| h.sigma);
    let rows = evaluate(samples, s_list, |h, s| {
        let w = carleman_weights(eta0, &WeightParams::new(s, lambda, grid.t_final())?, grid);
        let lhs = log_i_beta(&h.q, beta, h.sigma, &w, grid)?;
        let mut rhs = LogSum::default();
        rhs.add(log_integral_fields(grid, true, None, &pointwise(&w, beta), std::slice::from_ref(&h.f)));
        rhs.add(log_integral_fields(grid, true, Some(&mask), &pointwise(&w, beta + 3.0), std::slice::from_ref(&h.q)));
        Ok((lhs, rhs.value()))
    })?;
    Ok(CarlemanReport {
        inequality: Inequality::Lemma21,
        lambda,
        eps: Some(sigma),
        rows,
    })
}
