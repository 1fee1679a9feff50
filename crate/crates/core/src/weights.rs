//! Auxiliary function `eta0` and the exponential Carleman weight families.
//!
//! Two tables are built on a [`Grid`]:
//!
//! * [`WeightTable`]: `alpha = (e^{lambda eta0} - e^{2 lambda |eta0|_inf}) / (t^4 (T-t)^4)` and
//!   `phi = e^{lambda eta0} / (t^4 (T-t)^4)`, singular at both time ends.
//! * [`RefinedWeightTable`]: the same with `t(T-t)` replaced by the truncated
//!   profile [`truncated_profile`], so the weights are constant on `[0, T/2]`
//!   and only singular at `t = T`.
//!
//! Products such as `e^{2 s alpha} phi^18` leave the `f64` range long before
//! anything interesting happens, so the tables keep `alpha` (or `beta`) and
//! `ln phi` (or `ln gamma`) and callers combine them in the log domain.
//! At singular time levels every product `e^{c s alpha} phi^k` with `c > 0`
//! is defined by its limit, zero.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use serde::{Deserialize, Serialize};

/// Open axis-aligned box; the second axis is ignored in 1D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Subdomain {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            lo: [lo, 0.0],
            hi: [hi, 0.0],
        }
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, p: [f64; 2], dim: usize) -> bool {
        (0..dim).all(|a| p[a] > self.lo[a] && p[a] < self.hi[a])
    }

    pub fn contains_closed(&self, p: [f64; 2], dim: usize) -> bool {
        (0..dim).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    /// `self` is compactly contained in `outer`.
    pub fn compactly_inside(&self, outer: &Subdomain, dim: usize) -> bool {
        (0..dim).all(|a| self.lo[a] > outer.lo[a] && self.hi[a] < outer.hi[a])
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    fn validate(&self, name: &str, dim: usize) -> Result<()> {
        for a in 0..dim {
            if !(self.lo[a] < self.hi[a]) {
                return Err(Error::InvalidSubdomain(format!("{name} is empty along axis {a}")));
            }
        }
        Ok(())
    }

    fn inside_domain(&self, lengths: &[f64]) -> bool {
        lengths
            .iter()
            .enumerate()
            .all(|(a, &l)| self.lo[a] > 0.0 && self.hi[a] < l)
    }
}

/// The three nested observation sets `omega0 ⊂⊂ omega' ⊂⊂ omega ⊂⊂ Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRegions {
    pub omega0: Subdomain,
    pub omega_prime: Subdomain,
    pub omega: Subdomain,
}

impl ControlRegions {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let dim = grid.dim();
        self.omega0.validate("omega0", dim)?;
        self.omega_prime.validate("omega'", dim)?;
        self.omega.validate("omega", dim)?;
        if !self.omega0.compactly_inside(&self.omega_prime, dim) {
            return Err(Error::InvalidSubdomain("omega0 must be compactly inside omega'".into()));
        }
        if !self.omega_prime.compactly_inside(&self.omega, dim) {
            return Err(Error::InvalidSubdomain("omega' must be compactly inside omega".into()));
        }
        if !self.omega.inside_domain(grid.lengths()) {
            return Err(Error::InvalidSubdomain("omega must lie strictly inside the domain".into()));
        }
        Ok(())
    }
}

/// Auxiliary function: positive inside, zero on the boundary, with its only
/// critical point inside `omega0`.
#[derive(Debug, Clone)]
pub struct Eta0 {
    pub values: Field,
    pub gradient: Vec<Field>,
    pub regions: ControlRegions,
    /// `max |eta0|`.
    pub sup: f64,
    pub argmax: usize,
    /// Smallest `|grad eta0|` over nodes outside `omega0` (2D corners excluded).
    pub min_grad_outside: f64,
}

/// Cubic bump `x (L - x)(1 + p (x - L/2))` with its maximum at `center`, and
/// its derivative.
fn axis_bump(length: f64, center: f64) -> Result<(impl Fn(f64) -> f64, impl Fn(f64) -> f64)> {
    let d = center - 0.5 * length;
    let denom = 0.25 * length * length - 3.0 * d * d;
    if !(denom > 0.0) {
        return Err(Error::Eta0(format!("critical point {center} too close to the boundary")));
    }
    let p = 2.0 * d / denom;
    if p.abs() * 0.5 * length >= 1.0 {
        return Err(Error::Eta0(format!(
            "critical point {center} too far off-center for a positive bump"
        )));
    }
    let f = move |x: f64| x * (length - x) * (1.0 + p * (x - 0.5 * length));
    let df = move |x: f64| (length - 2.0 * x) * (1.0 + p * (x - 0.5 * length)) + p * x * (length - x);
    Ok((f, df))
}

/// Build `eta0` scaled so that `max eta0 = amplitude`, and verify its
/// defining properties node by node.
pub fn build_eta0(grid: &Grid, regions: ControlRegions, amplitude: f64) -> Result<Eta0> {
    regions.validate(grid)?;
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!("eta0 amplitude must be positive, got {amplitude}")));
    }
    let dim = grid.dim();
    let c = regions.omega0.center();
    let (fx, dfx) = axis_bump(grid.lengths()[0], c[0])?;
    let peak_x = fx(c[0]);
    let (fy, dfy, peak_y): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>, f64) = if dim == 2 {
        let (f, df) = axis_bump(grid.lengths()[1], c[1])?;
        let peak = f(c[1]);
        (Box::new(f), Box::new(df), peak)
    } else {
        (Box::new(|_| 1.0), Box::new(|_| 0.0), 1.0)
    };
    let scale = amplitude / (peak_x * peak_y);

    let n = grid.node_count();
    let mut values = Vec::with_capacity(n);
    let mut gx = Vec::with_capacity(n);
    let mut gy = Vec::with_capacity(n);
    for k in 0..n {
        let [x, y] = grid.coords(k);
        values.push(scale * fx(x) * fy(y));
        gx.push(scale * dfx(x) * fy(y));
        gy.push(scale * fx(x) * dfy(y));
    }
    // Boundary values are exactly zero by construction; pin them against rounding.
    for k in 0..n {
        if grid.is_boundary(k) {
            values[k] = 0.0;
        }
    }
    let gradient = if dim == 2 { vec![gx, gy] } else { vec![gx] };

    let mut argmax = 0;
    let mut sup = f64::NEG_INFINITY;
    let mut min_grad_outside = f64::INFINITY;
    for k in 0..n {
        let p = grid.coords(k);
        if grid.is_boundary(k) {
            if values[k] != 0.0 {
                return Err(Error::Eta0(format!("nonzero boundary value at node {k}")));
            }
        } else if !(values[k] > 0.0) {
            return Err(Error::Eta0(format!("non-positive value {} at interior node {k}", values[k])));
        }
        if values[k] > sup {
            sup = values[k];
            argmax = k;
        }
        if !regions.omega0.contains(p, dim) && !grid.is_corner(k) {
            let g: f64 = gradient.iter().map(|gc| gc[k] * gc[k]).sum::<f64>().sqrt();
            if !(g > 0.0) {
                return Err(Error::Eta0(format!("vanishing gradient outside omega0 at node {k}")));
            }
            min_grad_outside = min_grad_outside.min(g);
        }
    }
    if !regions.omega0.contains_closed(grid.coords(argmax), dim) {
        return Err(Error::Eta0("maximum of eta0 falls outside omega0".into()));
    }
    Ok(Eta0 {
        values,
        gradient,
        regions,
        sup: sup.max(amplitude),
        argmax,
        min_grad_outside,
    })
}

/// Carleman parameters `s`, `lambda` for a horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub s: f64,
    pub lambda: f64,
    pub t_final: f64,
}

impl WeightParams {
    pub fn new(s: f64, lambda: f64, t_final: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
        }
        if !(lambda >= 1.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be >= 1, got {lambda}")));
        }
        if !(t_final > 0.0) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {t_final}")));
        }
        Ok(Self { s, lambda, t_final })
    }

    /// `s = sigma0 (T^4 + T^8)`.
    pub fn from_sigma(sigma0: f64, lambda: f64, t_final: f64) -> Result<Self> {
        Self::new(sigma0 * time_scale(t_final), lambda, t_final)
    }

    /// `s / (T^4 + T^8)`.
    pub fn sigma(&self) -> f64 {
        self.s / time_scale(self.t_final)
    }

    /// Whether `s >= s_cal (T^4 + T^8)`.
    pub fn above_threshold(&self, s_cal: f64) -> bool {
        self.sigma() >= s_cal
    }
}

pub fn time_scale(t_final: f64) -> f64 {
    t_final.powi(4) + t_final.powi(8)
}

/// `l(t)`: `T^2/4` on `[0, T/2]`, `t (T - t)` afterwards.
pub fn truncated_profile(t: f64, t_final: f64) -> f64 {
    if t <= 0.5 * t_final {
        0.25 * t_final * t_final
    } else {
        t * (t_final - t)
    }
}

/// Which member of a weight family a log-weight query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    /// Pointwise `e^{2 s alpha(x,t)} phi(x,t)^k`.
    Pointwise,
    /// Spatial maxima `e^{2 s alpha*(t)} phi*(t)^k`.
    Star,
    /// Spatial minima `e^{2 s alpha^(t)} phi^(t)^k`.
    Hat,
}

pub const MIN_POWER: f64 = -20.0;
pub const MAX_POWER: f64 = 20.0;

/// Shared storage of both weight families.
#[derive(Debug, Clone)]
struct Table {
    s: f64,
    nodes: usize,
    /// Exponent function (`alpha` or `beta`), `[step * nodes + node]`.
    exponent: Vec<f64>,
    /// `ln phi` or `ln gamma`.
    log_base: Vec<f64>,
    exp_star: Vec<f64>,
    exp_hat: Vec<f64>,
    log_base_star: Vec<f64>,
    log_base_hat: Vec<f64>,
    singular: Vec<bool>,
}

impl Table {
    fn build(grid: &Grid, eta0: &Eta0, p: &WeightParams, denom: impl Fn(f64) -> f64, singular: impl Fn(usize) -> bool) -> Self {
        let nodes = grid.node_count();
        let levels = grid.steps() + 1;
        let top = (2.0 * p.lambda * eta0.sup).exp();
        let e_lam: Vec<f64> = eta0.values.iter().map(|&v| (p.lambda * v).exp()).collect();

        let mut exponent = vec![f64::NEG_INFINITY; nodes * levels];
        let mut log_base = vec![f64::INFINITY; nodes * levels];
        let mut exp_star = vec![f64::NEG_INFINITY; levels];
        let mut exp_hat = vec![f64::NEG_INFINITY; levels];
        let mut log_base_star = vec![f64::INFINITY; levels];
        let mut log_base_hat = vec![f64::INFINITY; levels];
        let mut sing = vec![false; levels];

        for k in 0..levels {
            if singular(k) {
                sing[k] = true;
                continue;
            }
            let d = denom(grid.time(k));
            let log_d = d.ln();
            let (mut emax, mut emin) = (f64::NEG_INFINITY, f64::INFINITY);
            let (mut lmax, mut lmin) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..nodes {
                let e = (e_lam[i] - top) / d;
                let l = p.lambda * eta0.values[i] - log_d;
                exponent[k * nodes + i] = e;
                log_base[k * nodes + i] = l;
                emax = emax.max(e);
                emin = emin.min(e);
                lmax = lmax.max(l);
                lmin = lmin.min(l);
            }
            exp_star[k] = emax;
            exp_hat[k] = emin;
            log_base_star[k] = lmax;
            log_base_hat[k] = lmin;
        }
        Self {
            s: p.s,
            nodes,
            exponent,
            log_base,
            exp_star,
            exp_hat,
            log_base_star,
            log_base_hat,
            singular: sing,
        }
    }

    fn pair(&self, kind: WeightKind, node: usize, step: usize) -> (f64, f64) {
        match kind {
            WeightKind::Pointwise => {
                let idx = step * self.nodes + node;
                (self.exponent[idx], self.log_base[idx])
            }
            WeightKind::Star => (self.exp_star[step], self.log_base_star[step]),
            WeightKind::Hat => (self.exp_hat[step], self.log_base_hat[step]),
        }
    }

    /// `ln(e^{c s w} w2^power)`, with limits at singular levels.
    fn log_general(&self, kind: WeightKind, c: f64, power: f64, node: usize, step: usize) -> f64 {
        if self.singular[step] {
            // The exponential dominates any power of the base near the singularity.
            return if c > 0.0 {
                f64::NEG_INFINITY
            } else if c < 0.0 {
                f64::INFINITY
            } else if power > 0.0 {
                f64::INFINITY
            } else if power < 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            };
        }
        let (w, lb) = self.pair(kind, node, step);
        let mut out = c * self.s * w;
        if power != 0.0 {
            out += power * lb;
        }
        out
    }
}

fn check_power(power: f64) -> Result<()> {
    if !(MIN_POWER..=MAX_POWER).contains(&power) {
        return Err(Error::PowerOutOfRange {
            power,
            min: MIN_POWER,
            max: MAX_POWER,
        });
    }
    Ok(())
}

/// Common read interface of both weight tables.
pub trait WeightFamily {
    fn params(&self) -> &WeightParams;
    fn nodes(&self) -> usize;
    fn levels(&self) -> usize;
    fn is_singular(&self, step: usize) -> bool;
    /// `alpha` or `beta` at `(node, step)`; `-inf` at singular levels.
    fn exponent(&self, node: usize, step: usize) -> f64;
    /// `ln phi` or `ln gamma` at `(node, step)`; `+inf` at singular levels.
    fn log_base(&self, node: usize, step: usize) -> f64;
    fn exponent_star(&self, step: usize) -> f64;
    fn exponent_hat(&self, step: usize) -> f64;
    fn log_base_star(&self, step: usize) -> f64;
    fn log_base_hat(&self, step: usize) -> f64;
    /// `ln(e^{c s w} w2^power)` for an arbitrary exponent coefficient `c`.
    fn log_weight_scaled(&self, kind: WeightKind, c: f64, power: f64, node: usize, step: usize) -> f64;
}

macro_rules! impl_family {
    ($t:ty) => {
        impl WeightFamily for $t {
            fn params(&self) -> &WeightParams {
                &self.params
            }
            fn nodes(&self) -> usize {
                self.table.nodes
            }
            fn levels(&self) -> usize {
                self.table.singular.len()
            }
            fn is_singular(&self, step: usize) -> bool {
                self.table.singular[step]
            }
            fn exponent(&self, node: usize, step: usize) -> f64 {
                self.table.exponent[step * self.table.nodes + node]
            }
            fn log_base(&self, node: usize, step: usize) -> f64 {
                self.table.log_base[step * self.table.nodes + node]
            }
            fn exponent_star(&self, step: usize) -> f64 {
                self.table.exp_star[step]
            }
            fn exponent_hat(&self, step: usize) -> f64 {
                self.table.exp_hat[step]
            }
            fn log_base_star(&self, step: usize) -> f64 {
                self.table.log_base_star[step]
            }
            fn log_base_hat(&self, step: usize) -> f64 {
                self.table.log_base_hat[step]
            }
            fn log_weight_scaled(&self, kind: WeightKind, c: f64, power: f64, node: usize, step: usize) -> f64 {
                self.table.log_general(kind, c, power, node, step)
            }
        }
    };
}

/// `alpha`, `phi` and their spatial extrema on every time level.
#[derive(Debug, Clone)]
pub struct WeightTable {
    params: WeightParams,
    table: Table,
}

/// `beta`, `gamma` (built from the truncated profile) and their extrema.
#[derive(Debug, Clone)]
pub struct RefinedWeightTable {
    params: WeightParams,
    table: Table,
}

impl_family!(WeightTable);
impl_family!(RefinedWeightTable);

pub fn carleman_weights(eta0: &Eta0, p: &WeightParams, grid: &Grid) -> WeightTable {
    let t_final = grid.t_final();
    let m = grid.steps();
    let table = Table::build(
        grid,
        eta0,
        p,
        |t| (t * (t_final - t)).powi(4),
        |k| k == 0 || k == m,
    );
    WeightTable { params: *p, table }
}

pub fn refined_weights(eta0: &Eta0, p: &WeightParams, grid: &Grid) -> RefinedWeightTable {
    let t_final = grid.t_final();
    let m = grid.steps();
    let table = Table::build(grid, eta0, p, |t| truncated_profile(t, t_final).powi(4), |k| k == m);
    RefinedWeightTable { params: *p, table }
}

/// `ln(e^{2 s w} w2^power)` where `(w, w2)` is the member of the family
/// selected by `kind`. Exponentiating the result gives a finite value or
/// zero, never NaN.
pub fn log_weight<W: WeightFamily + ?Sized>(
    table: &W,
    kind: WeightKind,
    power: f64,
    node: usize,
    step: usize,
) -> Result<f64> {
    check_power(power)?;
    Ok(table.log_weight_scaled(kind, 2.0, power, node, step))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regions_1d() -> ControlRegions {
        ControlRegions {
            omega0: Subdomain::interval(0.30, 0.40),
            omega_prime: Subdomain::interval(0.25, 0.45),
            omega: Subdomain::interval(0.20, 0.50),
        }
    }

    #[test]
    fn eta0_boundary_and_argmax() {
        let g = Grid::one_d(1.0, 100, 1.0, 100).unwrap();
        let eta = build_eta0(&g, regions_1d(), 0.1).unwrap();
        assert_eq!(eta.values[0], 0.0);
        assert_eq!(eta.values[100], 0.0);
        let xmax = g.coords(eta.argmax)[0];
        assert!((0.30..=0.40).contains(&xmax), "argmax at {xmax}");
        assert!(eta.min_grad_outside > 0.0);
        assert!((eta.sup - 0.1).abs() < 1e-12);
        // Independent scan of the nodal values.
        let scanned = (1..100)
            .filter(|&k| {
                let x = g.coords(k)[0];
                !(x > 0.30 && x < 0.40)
            })
            .map(|k| ((eta.values[k + 1] - eta.values[k - 1]) / 0.02).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(scanned > 0.0);
    }

    #[test]
    fn eta0_two_d() {
        let g = Grid::new(2, &[1.0, 1.0], &[20, 20], 1.0, 20).unwrap();
        let regions = ControlRegions {
            omega0: Subdomain::rect([0.3, 0.3], [0.4, 0.4]),
            omega_prime: Subdomain::rect([0.25, 0.25], [0.45, 0.45]),
            omega: Subdomain::rect([0.2, 0.2], [0.5, 0.5]),
        };
        let eta = build_eta0(&g, regions, 1.0).unwrap();
        assert!(eta.min_grad_outside > 0.0);
        let p = g.coords(eta.argmax);
        assert!(regions.omega0.contains_closed(p, 2));
    }

    #[test]
    fn eta0_rejects_bad_nesting() {
        let g = Grid::one_d(1.0, 50, 1.0, 20).unwrap();
        let mut r = regions_1d();
        r.omega_prime = Subdomain::interval(0.1, 0.45);
        assert!(matches!(build_eta0(&g, r, 1.0), Err(Error::InvalidSubdomain(_))));
        let r2 = ControlRegions {
            omega0: Subdomain::interval(0.02, 0.03),
            omega_prime: Subdomain::interval(0.015, 0.04),
            omega: Subdomain::interval(0.01, 0.05),
        };
        assert!(matches!(build_eta0(&g, r2, 1.0), Err(Error::Eta0(_))));
    }

    fn table_setup() -> (Grid, Eta0, WeightParams) {
        let g = Grid::one_d(1.0, 50, 1.0, 100).unwrap();
        let eta = build_eta0(&g, regions_1d(), 0.1).unwrap();
        let p = WeightParams::from_sigma(1.0, 1.5, 1.0).unwrap();
        (g, eta, p)
    }

    #[test]
    fn alpha_negative_and_phi_formula() {
        let (g, eta, p) = table_setup();
        let w = carleman_weights(&eta, &p, &g);
        for k in 1..g.steps() {
            for i in 0..g.node_count() {
                assert!(w.exponent(i, k) < 0.0);
            }
            // alpha* at argmax eta0, alpha^ on the boundary.
            assert_eq!(w.exponent_star(k), w.exponent(eta.argmax, k));
            assert_eq!(w.exponent_hat(k), w.exponent(0, k));
            assert!(w.log_base_star(k) >= w.log_base_hat(k));
        }
        let half = g.steps() / 2;
        let direct = (1.5 * eta.values[eta.argmax]).exp() * (2.0_f64 / 1.0).powi(8);
        let got = w.log_base(eta.argmax, half).exp();
        assert!((got - direct).abs() / direct < 1e-13);
        assert!(w.is_singular(0) && w.is_singular(g.steps()));
    }

    #[test]
    fn refined_weights_profile() {
        let (g, eta, p) = table_setup();
        let w = refined_weights(&eta, &p, &g);
        let a = carleman_weights(&eta, &p, &g);
        let m = g.steps();
        for i in 0..g.node_count() {
            assert_eq!(w.exponent(i, m / 4), w.exponent(i, m / 2));
            assert_eq!(w.log_base(i, m / 4), w.log_base(i, 0));
            for k in m / 2..m {
                assert_eq!(w.exponent(i, k), a.exponent(i, k));
                assert_eq!(w.log_base(i, k), a.log_base(i, k));
            }
            for k in 1..m {
                assert!(w.exponent(i, k) >= a.exponent(i, k));
                assert!(w.exponent(i, k) < 0.0);
            }
        }
        for k in 0..=m {
            let t = g.time(k);
            assert!(truncated_profile(t, 1.0) >= t * (1.0 - t) - 1e-15);
        }
        assert!(!w.is_singular(0));
        assert!(w.is_singular(m));
        // e^{2 s beta*} gamma*^18 decays to zero approaching T.
        let tail: Vec<f64> = (m - 5..m)
            .map(|k| log_weight(&w, WeightKind::Star, 18.0, 0, k).unwrap())
            .collect();
        assert!(tail.windows(2).all(|p| p[1] < p[0]));
        assert_eq!(log_weight(&w, WeightKind::Star, 18.0, 0, m).unwrap().exp(), 0.0);
    }

    #[test]
    fn log_weight_contract() {
        let (g, eta, p) = table_setup();
        let w = refined_weights(&eta, &p, &g);
        let half = g.steps() / 2;
        let lw = log_weight(&w, WeightKind::Star, 0.0, 0, half).unwrap();
        assert_eq!(lw, 2.0 * p.s * w.exponent_star(half));
        assert!(matches!(
            log_weight(&w, WeightKind::Star, 25.0, 0, half),
            Err(Error::PowerOutOfRange { .. })
        ));
        let a = carleman_weights(&eta, &p, &g);
        for k in 0..=g.steps() {
            for i in 0..g.node_count() {
                for power in [-4.0, 0.0, 3.0, 10.0, 18.0] {
                    for kind in [WeightKind::Pointwise, WeightKind::Star, WeightKind::Hat] {
                        let v = log_weight(&a, kind, power, i, k).unwrap().exp();
                        assert!(!v.is_nan());
                        let v = log_weight(&w, kind, power, i, k).unwrap().exp();
                        assert!(!v.is_nan());
                    }
                }
            }
        }
        // Direct products where they are representable.
        let mut compared = 0;
        for k in 1..g.steps() {
            for i in (0..g.node_count()).step_by(7) {
                let e = (2.0 * p.s * a.exponent(i, k)).exp();
                let phi = a.log_base(i, k).exp();
                let direct = e * phi.powi(3);
                if direct.is_normal() && direct < 1e300 {
                    let lw = log_weight(&a, WeightKind::Pointwise, 3.0, i, k).unwrap().exp();
                    assert!((lw - direct).abs() <= 1e-10 * direct);
                    compared += 1;
                }
            }
        }
        assert!(compared > 10);
    }
}
