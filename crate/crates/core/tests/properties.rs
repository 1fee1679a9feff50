use ks_control::adjoint::{duality_gap, solve_adjoint};
use ks_control::carleman_check::{log_i_beta, LogSum};
use ks_control::grid::{self, build_grid, Field, Grid, SpaceTimeField};
use ks_control::ks_model::{build_cutoff, solve_linearized, Control, KsParams};
use ks_control::weights::{
    build_eta0, carleman_weights, refined_weights, truncated_profile, ControlRegions, Subdomain, WeightFamily,
    WeightParams,
};
use proptest::prelude::*;

fn grid_1d() -> Grid {
    Grid::one_d(1.0, 16, 1.0, 20).unwrap()
}

fn grid_2d() -> Grid {
    build_grid(2, &[1.0, 1.5], &[8, 10], 1.0, 16).unwrap()
}

fn regions() -> ControlRegions {
    ControlRegions {
        omega0: Subdomain::interval(0.3, 0.4),
        omega_prime: Subdomain::interval(0.25, 0.45),
        omega: Subdomain::interval(0.2, 0.5),
    }
}

fn field(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

fn zero_mean(mut f: Field, g: &Grid) -> Field {
    grid::remove_mean(&mut f, g);
    f
}

fn spacetime(g: &Grid, vals: &[f64], zero_mean_levels: bool) -> SpaceTimeField {
    let n = g.node_count();
    SpaceTimeField::from_fn(g, |k| {
        // Reuse a short random vector with a level-dependent shift and scale.
        let f: Field = (0..n).map(|i| vals[(i + 3 * k) % vals.len()] * (1.0 + 0.1 * k as f64)).collect();
        if zero_mean_levels {
            zero_mean(f, g)
        } else {
            f
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_symmetric_and_nonpositive(a in field(99), b in field(99)) {
        for g in [grid_1d(), grid_2d()] {
            let n = g.node_count();
            let (f, h) = (&a[..n.min(a.len())], &b[..n.min(b.len())]);
            if f.len() < n { continue; }
            let lf = grid::neumann_laplacian(f, &g).unwrap();
            let lh = grid::neumann_laplacian(h, &g).unwrap();
            let x = grid::inner(&lf, h, &g);
            let y = grid::inner(f, &lh, &g);
            prop_assert!((x - y).abs() <= 1e-10 * (x.abs() + y.abs() + 1.0));
            prop_assert!(grid::inner(&lf, f, &g) <= 1e-12);
        }
    }

    #[test]
    fn modal_transform_round_trips(a in field(99)) {
        let g = grid_2d();
        let f = &a[..g.node_count()];
        let back = g.from_modes(&g.to_modes(f));
        for (x, y) in f.iter().zip(&back) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn linearized_solver_is_linear(a in field(17), b in field(17), c in -2.0..2.0f64, eps in 0.01..1.0f64) {
        let g = grid_1d();
        let p = KsParams::with_steady_state(1.0, 1.0, eps, 1.0).unwrap();
        let chi = build_cutoff(&g, &regions()).unwrap();
        let run = |v: &[f64]| {
            let mut ctl = Control::zero(&g, chi.clone());
            ctl.g = spacetime(&g, v, false);
            let h1 = spacetime(&g, v, true);
            let h2 = spacetime(&g, &v.iter().rev().copied().collect::<Vec<_>>(), false);
            solve_linearized(&p, &g, &zero_mean(v.to_vec(), &g), v, &ctl, &h1, &h2).unwrap()
        };
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| c * x + y).collect();
        let (ra, rb, rm) = (run(&a), run(&b), run(&mix));
        let mut expect = ra.u.clone();
        expect.scale(c);
        expect.axpy(1.0, &rb.u);
        expect.axpy(-1.0, &rm.u);
        prop_assert!(expect.max_abs() < 1e-10 * (1.0 + rm.u.max_abs()));
        prop_assert!(rm.mass_drift(&g) < 1e-12);
    }

    #[test]
    fn duality_gap_vanishes(a in field(17), b in field(17), eps in 0.01..1.0f64) {
        let g = grid_1d();
        let p = KsParams::with_steady_state(1.0, 2.0, eps, 1.0).unwrap();
        let chi = build_cutoff(&g, &regions()).unwrap();
        let mut ctl = Control::zero(&g, chi);
        ctl.g = spacetime(&g, &b, false);
        let h1 = spacetime(&g, &a, true);
        let h2 = spacetime(&g, &b, false);
        let tr = solve_linearized(&p, &g, &zero_mean(a.clone(), &g), &b, &ctl, &h1, &h2).unwrap();
        let adj = solve_adjoint(&p, &g, &zero_mean(b.clone(), &g), &a, &spacetime(&g, &b, false), &spacetime(&g, &a, false)).unwrap();
        let gap = duality_gap(&g, &tr, &adj, &ctl, &h1, &h2).unwrap();
        prop_assert!(gap.relative() < 1e-12, "{:?}", gap);
    }

    #[test]
    fn weighted_integral_is_two_homogeneous(a in field(17), c in 0.01..100.0f64) {
        let g = grid_1d();
        let eta = build_eta0(&g, regions(), 0.01).unwrap();
        let w = carleman_weights(&eta, &WeightParams::new(30.0, 1.5, 1.0).unwrap(), &g);
        let q = SpaceTimeField::from_fn(&g, |k| a.iter().map(|x| x * (1.0 + g.time(k))).collect());
        let mut qc = q.clone();
        qc.scale(c);
        let l1 = log_i_beta(&q, 1.0, 0.5, &w, &g).unwrap();
        let l2 = log_i_beta(&qc, 1.0, 0.5, &w, &g).unwrap();
        prop_assert!((l2 - l1 - 2.0 * c.ln()).abs() < 1e-10);
    }

    #[test]
    fn logsum_agrees_with_direct_sum(xs in prop::collection::vec(-50.0..50.0f64, 1..40)) {
        let mut acc = LogSum::default();
        xs.iter().for_each(|x| acc.add(*x));
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((acc.value() - direct).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn refined_exponent_dominates_pointwise(s in 1.0..500.0f64, lambda in 1.0..3.0f64, t in 0.05..0.95f64) {
        let tf = 1.0;
        prop_assert!(truncated_profile(t, tf) >= t * (tf - t) - 1e-15);
        let g = grid_1d();
        let eta = build_eta0(&g, regions(), 0.01).unwrap();
        let p = WeightParams::new(s, lambda, tf).unwrap();
        let (pw, rw) = (carleman_weights(&eta, &p, &g), refined_weights(&eta, &p, &g));
        for k in 1..g.steps() {
            for i in 0..g.node_count() {
                prop_assert!(rw.exponent(i, k) >= pw.exponent(i, k) - 1e-12 * pw.exponent(i, k).abs());
            }
        }
    }
}
