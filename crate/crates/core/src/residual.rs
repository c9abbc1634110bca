//! The least-squares merit `r(z, µ) = ½‖F(z, µ)‖²` and stationarity tests.

use serde::{Deserialize, Serialize};

use crate::problem::{Problem, Vector};
use crate::smoothing::{kappa, SmoothResidual, Smoothing};

/// Merit value, gradient and residual norms at one point.
#[derive(Debug, Clone)]
pub struct Gradient {
    /// `∇r = J(z, µ)^T F(z, µ)`.
    pub g: Vector,
    pub r_value: f64,
    pub f_norm: f64,
    pub fn_norm: f64,
}

/// Evaluates `F`, then `g = J^T F`: one `H` evaluation plus one transposed
/// derivative.
pub fn eval_r_and_grad<P: Problem + ?Sized>(
    problem: &P,
    z: &Vector,
    smoothing: &Smoothing,
) -> (SmoothResidual, Gradient) {
    let lin = smoothing.linearize(problem, z);
    let grad = gradient_at(problem, &lin);
    (lin, grad)
}

pub fn gradient_at<P: Problem + ?Sized>(problem: &P, lin: &SmoothResidual) -> Gradient {
    let f_norm = lin.f.norm();
    Gradient {
        g: lin.vjp(problem, &lin.f),
        r_value: 0.5 * f_norm * f_norm,
        f_norm,
        fn_norm: lin.f_nonsmooth.norm(),
    }
}

/// `r(z, µ)` alone.
pub fn eval_r<P: Problem + ?Sized>(problem: &P, z: &Vector, smoothing: &Smoothing) -> f64 {
    let f = crate::smoothing::f_smooth(problem, z, smoothing);
    0.5 * f.norm_squared()
}

/// `‖F_N(z)‖ ≤ ε`.
pub fn is_epsilon_stationary(fn_norm: f64, eps: f64) -> bool {
    assert!(eps > 0.0, "eps must be positive");
    fn_norm <= eps
}

/// The bookkeeping `‖F_N‖ ≤ ‖F‖ + κµ ≤ ε + κµ ≤ 2ε` for a run stopped at
/// `‖F(z, µ)‖ ≤ ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityCertificate {
    pub kappa: f64,
    pub mu: f64,
    pub eps: f64,
    pub f_norm: f64,
    pub fn_norm: f64,
    /// `κµ + ε`.
    pub kappa_mu_plus_eps: f64,
    /// `κµ + ε ≤ 2ε`.
    pub within_two_eps: bool,
    /// `‖F_N‖ ≤ ‖F‖ + κµ`, the smoothing bound checked on the final iterate.
    pub smoothing_bound_holds: bool,
    /// `‖F_N‖ ≤ 2ε`.
    pub two_eps_stationary: bool,
}

impl StationarityCertificate {
    pub fn new(smoothing: &Smoothing, dim: usize, eps: f64, f_norm: f64, fn_norm: f64) -> Self {
        let k = kappa(smoothing.kind, dim);
        let kappa_mu = k * smoothing.mu;
        Self {
            kappa: k,
            mu: smoothing.mu,
            eps,
            f_norm,
            fn_norm,
            kappa_mu_plus_eps: kappa_mu + eps,
            within_two_eps: kappa_mu + eps <= 2.0 * eps,
            smoothing_bound_holds: fn_norm <= f_norm + kappa_mu * (1.0 + 1e-12),
            two_eps_stationary: fn_norm <= 2.0 * eps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BilinearGame, BoxBounds, Matrix};
    use crate::smoothing::SmoothingKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn game(seed: u64, scale: f64) -> BilinearGame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BilinearGame::new(
            Matrix::from_fn(2, 2, |_, _| scale * rng.gen_range(-1.0..1.0)),
            Vector::from_fn(2, |_, _| rng.gen_range(-0.5..0.5)),
            Vector::from_fn(2, |_, _| rng.gen_range(-0.5..0.5)),
            BoxBounds::uniform(4, -1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_at_interior_solution() {
        let g = BilinearGame::new(
            Matrix::identity(2, 2),
            Vector::zeros(2),
            Vector::zeros(2),
            BoxBounds::uniform(4, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let s = Smoothing::new(SmoothingKind::Uniform, 1e-2, g.bounds()).unwrap();
        let (_, grad) = eval_r_and_grad(&g, &Vector::zeros(4), &s);
        assert_eq!(grad.r_value, 0.0);
        assert_eq!(grad.g, Vector::zeros(4));
        assert_eq!(grad.fn_norm, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = game(4, 1.0);
        let s = Smoothing::new(SmoothingKind::Uniform, 1e-2, g.bounds()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let z = Vector::from_fn(4, |_, _| rng.gen_range(-1.2..1.2));
            let (_, grad) = eval_r_and_grad(&g, &z, &s);
            let mut fd = Vector::zeros(4);
            for i in 0..4 {
                let h = 1e-6;
                let mut zp = z.clone();
                zp[i] += h;
                let mut zm = z.clone();
                zm[i] -= h;
                fd[i] = (eval_r(&g, &zp, &s) - eval_r(&g, &zm, &s)) / (2.0 * h);
            }
            assert!((&fd - &grad.g).norm() <= 1e-5 * (1.0 + grad.g.norm()));
            assert_eq!(grad.r_value, 0.5 * grad.f_norm * grad.f_norm);
        }
    }

    #[test]
    fn scaling_h_keeps_interior_zero_set() {
        // H and 2H share the interior zero; F_N vanishes at the same point.
        let base = game(9, 1.0);
        let scaled = BilinearGame::new(
            base.coupling() * 2.0,
            Vector::zeros(2),
            Vector::zeros(2),
            base.bounds().clone(),
        )
        .unwrap();
        let unscaled = BilinearGame::new(
            base.coupling().clone(),
            Vector::zeros(2),
            Vector::zeros(2),
            base.bounds().clone(),
        )
        .unwrap();
        let z0 = Vector::zeros(4);
        let z = Vector::from_element(4, 0.1);
        let s = Smoothing::new(SmoothingKind::Uniform, 1e-3, base.bounds()).unwrap();
        assert_eq!(crate::smoothing::f_nonsmooth(&scaled, &z0).norm(), 0.0);
        assert_eq!(crate::smoothing::f_nonsmooth(&unscaled, &z0).norm(), 0.0);
        assert!(eval_r(&scaled, &z, &s) > eval_r(&unscaled, &z, &s));
    }

    #[test]
    fn epsilon_stationarity_is_closed() {
        assert!(is_epsilon_stationary(0.0, 1e-9));
        assert!(is_epsilon_stationary(1e-5, 1e-5));
        assert!(!is_epsilon_stationary(1.0000001e-5, 1e-5));
    }

    #[test]
    fn certificate_for_default_parameters() {
        let b = BoxBounds::uniform(1, -1.0, 1.0).unwrap();
        let s = Smoothing::new(SmoothingKind::Uniform, 1e-8, &b).unwrap();
        // n + m = 6.4e7 is the largest dimension with κµ ≤ ε.
        let c = StationarityCertificate::new(&s, 64_000_000, 1e-5, 9e-6, 1.5e-5);
        assert!((c.kappa - 1000.0).abs() < 1e-9);
        assert!(c.within_two_eps);
        assert!(c.two_eps_stationary);
        let c = StationarityCertificate::new(&s, 100_000_000, 1e-5, 9e-6, 1.5e-5);
        assert!(!c.within_two_eps);
    }

    #[test]
    fn norm_gap_bounded_by_kappa_mu() {
        let g = game(13, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for kind in [
            SmoothingKind::Uniform,
            SmoothingKind::Logistic,
            SmoothingKind::CauchyLike,
        ] {
            let s = Smoothing::new(kind, 0.05, g.bounds()).unwrap();
            for _ in 0..200 {
                let z = Vector::from_fn(4, |_, _| rng.gen_range(-1.5..1.5));
                let (_, grad) = eval_r_and_grad(&g, &z, &s);
                assert!((grad.f_norm - grad.fn_norm).abs() <= kappa(kind, 4) * 0.05 + 1e-15);
            }
        }
    }
}
