use proptest::prelude::*;

use qnstr_core::smoothing::{f_nonsmooth, f_smooth};
use qnstr_core::trs::{cauchy_decrease_bound, model_decrease};
use qnstr_core::{
    cauchy_point, kappa, qnstr_solve, solve_trs, BilinearGame, BoxBounds, Matrix, Problem,
    Smoothing, SmoothingKind, SolverConfig, StepMode, SubspaceKind, TinyGan, TinyGanSpec, Vector,
};

fn vec_strategy(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vector> {
    proptest::collection::vec(lo..hi, len).prop_map(Vector::from_vec)
}

fn kind_strategy() -> impl Strategy<Value = SmoothingKind> {
    prop_oneof![
        Just(SmoothingKind::Uniform),
        Just(SmoothingKind::Logistic),
        Just(SmoothingKind::CauchyLike),
    ]
}

fn game(entries: &[f64]) -> BilinearGame {
    BilinearGame::new(
        Matrix::from_row_slice(2, 2, &entries[..4]),
        Vector::from_row_slice(&entries[4..6]),
        Vector::from_row_slice(&entries[6..8]),
        BoxBounds::uniform(4, -1.0, 1.0).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smoothing_error_is_within_kappa_mu(
        kind in kind_strategy(),
        entries in proptest::collection::vec(-2.0..2.0f64, 8),
        z in vec_strategy(4, -1.5, 1.5),
        log_mu in -8.0..-1.0f64,
    ) {
        let g = game(&entries);
        let mu = 10f64.powf(log_mu);
        let s = Smoothing::new(kind, mu, g.bounds()).unwrap();
        let gap = (f_smooth(&g, &z, &s) - f_nonsmooth(&g, &z)).norm();
        prop_assert!(gap <= kappa(kind, 4) * mu * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn projection_is_idempotent_and_feasible(
        lower in vec_strategy(5, -2.0, 0.0),
        width in vec_strategy(5, 0.01, 3.0),
        z in vec_strategy(5, -5.0, 5.0),
    ) {
        let b = BoxBounds::new(lower.clone(), &lower + width).unwrap();
        let p = b.project(&z);
        prop_assert!(b.contains(&p));
        prop_assert_eq!(b.project(&p), p.clone());
        if b.contains(&z) {
            prop_assert_eq!(p, z);
        }
    }

    #[test]
    fn trs_beats_cauchy_and_stays_feasible(
        seed_entries in proptest::collection::vec(-1.0..1.0f64, 9 + 9 + 3),
        dim in 1usize..=3,
        log_delta in -3.0..1.0f64,
    ) {
        let b = Matrix::from_fn(dim, dim, |i, j| seed_entries[3 * i + j]);
        let q = &b * b.transpose() + Matrix::identity(dim, dim) * 0.05;
        let w = Matrix::from_fn(dim, dim, |i, j| seed_entries[9 + 3 * i + j]);
        let g = &w * w.transpose() + Matrix::identity(dim, dim) * 0.2;
        let c = Vector::from_fn(dim, |i, _| seed_entries[18 + i]);
        prop_assume!(c.norm() > 1e-6);
        let delta = 10f64.powf(log_delta);
        let exact = solve_trs(&q, &g, &c, delta).unwrap();
        prop_assert!(exact.step_norm <= delta * (1.0 + 1e-10));
        prop_assert!((exact.model_decrease - model_decrease(&q, &c, &exact.alpha)).abs() < 1e-14);
        // The generalized steepest descent direction G^{-1} c plays the role of g.
        let g_inv_c = g.clone().cholesky().unwrap().solve(&c);
        let g_norm = c.dot(&g_inv_c).sqrt();
        let h_quad = g_inv_c.dot(&(&q * &g_inv_c)) * g_norm * g_norm / g_inv_c.dot(&(&g * &g_inv_c));
        let cauchy = cauchy_point(&q, &g, &c, g_norm, h_quad, delta).unwrap();
        prop_assert!(exact.model_decrease >= cauchy.model_decrease - 1e-12);
        prop_assert!(cauchy.step_norm <= delta * (1.0 + 1e-10));
    }

    #[test]
    fn solver_trace_invariants_on_random_games(
        entries in proptest::collection::vec(-1.0..1.0f64, 8),
        z0 in vec_strategy(4, -1.0, 1.0),
        subspace in prop_oneof![Just(SubspaceKind::Vz), Just(SubspaceKind::VF), Just(SubspaceKind::Vg)],
        l in 1usize..=4,
        cauchy in any::<bool>(),
    ) {
        let g = game(&entries);
        let config = SolverConfig {
            subspace,
            subspace_dim: l,
            max_iters: 60,
            step: if cauchy { StepMode::Cauchy } else { StepMode::Exact },
            ..SolverConfig::default()
        };
        let report = qnstr_solve(&g, &config, z0).unwrap();
        let mut last_r = f64::INFINITY;
        for rec in &report.trace {
            prop_assert!(rec.r_value <= last_r);
            last_r = rec.r_value;
            prop_assert!(rec.delta > 0.0 && rec.delta <= config.delta_bar);
            prop_assert!(rec.step_norm <= rec.delta * (1.0 + 1e-10));
            prop_assert_eq!(rec.accepted, rec.rho > config.eta);
            prop_assert!(rec.lemma_holds(), "{:?}", rec);
            let bound = cauchy_decrease_bound(rec.g_norm, rec.delta, rec.h_norm_ub);
            prop_assert_eq!(bound, rec.cauchy_bound);
        }
        prop_assert_eq!(report.diagnostics.secant_violations, 0);
        prop_assert_eq!(report.diagnostics.pd_violations, 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn tiny_gan_jvp_is_linear(
        seed in 0u64..1000,
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
    ) {
        let spec = TinyGanSpec {
            samples: 4,
            ..TinyGanSpec::default()
        };
        let gan = TinyGan::synthetic(spec, seed).unwrap();
        let z = gan.initial_point(seed) * 10.0;
        let p = gan.into_problem().unwrap();
        let d = p.dim();
        let v = Vector::from_fn(d, |i, _| ((i as f64) * 0.37 + seed as f64).sin());
        let w = Vector::from_fn(d, |i, _| ((i as f64) * 1.3 - seed as f64).cos());
        let lhs = p.eval_h_jvp(&z, &(&v * a + &w * b));
        let rhs = p.eval_h_jvp(&z, &v) * a + p.eval_h_jvp(&z, &w) * b;
        prop_assert!((&lhs - &rhs).norm() <= 1e-8 * (1.0 + rhs.norm()));
    }
}
