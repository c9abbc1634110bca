//! Shared fixtures for the solver benchmarks.

use qnstr_core::baselines::warm_start_adam;
use qnstr_core::subspace::{collect_directions, rank_filter, RANK_TOL};
use qnstr_core::{
    DirectionHistory, Matrix, Problem, QuasiNewtonState, SaaProblem, Smoothing, SmoothingKind,
    SubspaceKind, TinyGan, TinyGanSpec, Vector,
};

/// Default-sized tiny GAN after 500 alternating Adam steps.
pub fn warm_tiny_gan(seed: u64) -> (SaaProblem<TinyGan>, Vector) {
    let gan = TinyGan::synthetic(TinyGanSpec::default(), seed).expect("valid spec");
    let z0 = gan.initial_point(seed);
    let problem = gan.into_problem().expect("valid bounds");
    let z = warm_start_adam(&problem, &z0, 500, 1e-3);
    (problem, z)
}

/// A `dim × dim` positive definite pair `(Q, G)` and a linear term, filled
/// deterministically from `seed`.
pub fn trs_instance(dim: usize, seed: u64) -> (Matrix, Matrix, Vector) {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let b = Matrix::from_fn(dim, dim, |_, _| next());
    let w = Matrix::from_fn(dim, dim, |_, _| next());
    let c = Vector::from_fn(dim, |_, _| next());
    let q = &b * b.transpose() + Matrix::identity(dim, dim) * 0.05;
    let g = &w * w.transpose() + Matrix::identity(dim, dim) * 0.1;
    (q, g, c)
}

/// Everything `assemble_model` needs at a point, with an `L`-column
/// subspace built from synthetic step history.
pub struct ModelInputs {
    pub lin: qnstr_core::SmoothResidual,
    pub qn: QuasiNewtonState,
    pub v_cols: Matrix,
    pub g: Vector,
}

pub fn model_inputs<P: Problem + ?Sized>(problem: &P, z: &Vector, l: usize) -> ModelInputs {
    let smoothing =
        Smoothing::new(SmoothingKind::Uniform, 1e-8, problem.bounds()).expect("valid smoothing");
    let lin = smoothing.linearize(problem, z);
    let g = lin.vjp(problem, &lin.f);
    let mut history = DirectionHistory::new(l);
    for i in 0..l {
        let s = Vector::from_fn(z.len(), |j, _| ((i * 31 + j) as f64 * 0.7).sin() * 1e-3);
        history.accept_step(&s, &g);
    }
    let raw = collect_directions(SubspaceKind::Vz, &history, &g);
    let v_cols = rank_filter(&raw, RANK_TOL).expect("nonzero gradient");
    let qn = QuasiNewtonState::new(z.len(), lin.f.norm(), 1e-4, None);
    ModelInputs { lin, qn, v_cols, g }
}
