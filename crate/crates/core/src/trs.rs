//! The `L`-dimensional trust-region subproblem
//!
//! ```text
//! min_α  c^T α + ½ α^T Q α   s.t.  α^T G α ≤ Δ²
//! ```
//!
//! with `G = V^T V` and `Q` positive definite, solved exactly, plus the
//! closed-form Cauchy point along `-g`.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::SymEigen;
use crate::problem::{Matrix, Vector};

/// Relative tolerance on `‖p(λ)‖ = Δ`.
const SECULAR_TOL: f64 = 1e-12;
const MAX_SECULAR_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub alpha: Vector,
    /// `‖V α‖ = sqrt(α^T G α)`.
    pub step_norm: f64,
    pub on_boundary: bool,
    /// `m(0) - m(α) = -(c^T α + ½ α^T Q α)`.
    pub model_decrease: f64,
    /// Multiplier of the norm constraint (zero for interior and Cauchy steps).
    pub multiplier: f64,
    /// Whether `Q` needed the `1e-12 tr(Q) G` regularization.
    pub regularized: bool,
}

/// `-(c^T α + ½ α^T Q α)`.
pub fn model_decrease(q: &Matrix, c: &Vector, alpha: &Vector) -> f64 {
    -(c.dot(alpha) + 0.5 * alpha.dot(&(q * alpha)))
}

/// `½ ‖g‖ min(Δ, ‖g‖ / ‖H‖)`.
pub fn cauchy_decrease_bound(g_norm: f64, delta: f64, h_norm: f64) -> f64 {
    0.5 * g_norm * delta.min(g_norm / h_norm)
}

fn g_norm_of(g: &Matrix, alpha: &Vector) -> f64 {
    alpha.dot(&(g * alpha)).max(0.0).sqrt()
}

fn finish(
    q: &Matrix,
    g: &Matrix,
    c: &Vector,
    mut alpha: Vector,
    delta: f64,
    multiplier: f64,
    regularized: bool,
) -> SubproblemSolution {
    let mut step_norm = g_norm_of(g, &alpha);
    if step_norm > delta {
        alpha *= delta / step_norm;
        step_norm = g_norm_of(g, &alpha);
    }
    SubproblemSolution {
        model_decrease: model_decrease(q, c, &alpha),
        on_boundary: step_norm >= (1.0 - 1e-8) * delta,
        step_norm,
        alpha,
        multiplier,
        regularized,
    }
}

/// Global minimizer of the subproblem.
///
/// With `G = L L^T` and `β = L^T α` the constraint becomes `‖β‖ ≤ Δ`. The
/// interior Newton point is returned when feasible; otherwise the multiplier
/// `λ > 0` solving `‖(Q̃ + λI)^{-1} c̃‖ = Δ` is found by safeguarded Newton
/// iteration on `1/‖p(λ)‖ - 1/Δ` inside `[0, ‖c̃‖/Δ]`.
pub fn solve_trs(q: &Matrix, g: &Matrix, c: &Vector, delta: f64) -> Result<SubproblemSolution> {
    assert!(delta > 0.0, "trust-region radius must be positive");
    let dim = c.len();
    let chol = Cholesky::new(g.clone()).ok_or(Error::NotPositiveDefinite("G"))?;
    let l = chol.l();
    let reduce = |m: &Matrix| -> Matrix {
        let left = l.solve_lower_triangular(m).expect("nonsingular factor");
        let both = l
            .solve_lower_triangular(&left.transpose())
            .expect("nonsingular factor");
        (&both + both.transpose()) * 0.5
    };
    let c_red = l.solve_lower_triangular(c).expect("nonsingular factor");

    let mut regularized = false;
    let mut q_red = reduce(q);
    let mut eig = SymEigen::new(&q_red);
    if eig.min() <= 0.0 {
        let shift = 1e-12 * q.trace().abs();
        q_red += Matrix::identity(dim, dim) * shift;
        eig = SymEigen::new(&q_red);
        regularized = true;
        if eig.min() <= 0.0 {
            return Err(Error::NotPositiveDefinite("Q"));
        }
    }
    let theta = &eig.eigenvalues;
    let gamma = eig.eigenvectors.tr_mul(&c_red);
    let p_norm = |lambda: f64| -> f64 {
        theta
            .iter()
            .zip(gamma.iter())
            .map(|(t, g)| (g / (t + lambda)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let beta_at = |lambda: f64| -> Vector {
        let coeffs = Vector::from_iterator(
            dim,
            theta
                .iter()
                .zip(gamma.iter())
                .map(|(t, g)| -g / (t + lambda)),
        );
        &eig.eigenvectors * coeffs
    };
    let to_alpha = |beta: Vector| -> Vector {
        l.transpose()
            .solve_upper_triangular(&beta)
            .expect("nonsingular factor")
    };

    if p_norm(0.0) <= delta {
        return Ok(finish(
            q,
            g,
            c,
            to_alpha(beta_at(0.0)),
            delta,
            0.0,
            regularized,
        ));
    }

    let (mut lo, mut hi) = (0.0_f64, c_red.norm() / delta);
    let mut lambda = 0.0;
    for _ in 0..MAX_SECULAR_ITERS {
        let norm = p_norm(lambda);
        if (norm - delta).abs() <= SECULAR_TOL * delta {
            break;
        }
        if norm > delta {
            lo = lambda;
        } else {
            hi = lambda;
        }
        // φ(λ) = 1/‖p‖ - 1/Δ, φ'(λ) = Σ γ²/(θ+λ)³ / ‖p‖³
        let cubic: f64 = theta
            .iter()
            .zip(gamma.iter())
            .map(|(t, g)| g * g / (t + lambda).powi(3))
            .sum();
        let phi = 1.0 / norm - 1.0 / delta;
        let dphi = cubic / norm.powi(3);
        let newton = lambda - phi / dphi;
        lambda = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(finish(
        q,
        g,
        c,
        to_alpha(beta_at(lambda)),
        delta,
        lambda,
        regularized,
    ))
}

/// The Cauchy point `α^C = -τ (Δ/‖g‖) G^{-1} c` with
/// `τ = min(‖g‖³ / (Δ g^T H g), 1)`.
pub fn cauchy_point(
    q: &Matrix,
    g: &Matrix,
    c: &Vector,
    g_norm: f64,
    h_quad: f64,
    delta: f64,
) -> Result<SubproblemSolution> {
    assert!(
        g_norm > 0.0 && h_quad > 0.0,
        "Cauchy point needs g ≠ 0 and g^T H g > 0"
    );
    let chol = Cholesky::new(g.clone()).ok_or(Error::NotPositiveDefinite("G"))?;
    let tau = cauchy_tau(g_norm, h_quad, delta);
    let alpha = chol.solve(c) * (-tau * delta / g_norm);
    Ok(finish(q, g, c, alpha, delta, 0.0, false))
}

/// `τ = min(‖g‖³ / (Δ g^T H g), 1)`.
pub fn cauchy_tau(g_norm: f64, h_quad: f64, delta: f64) -> f64 {
    (g_norm.powi(3) / (delta * h_quad)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pd(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
        let b = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + Matrix::identity(dim, dim) * 0.1
    }

    #[test]
    fn boundary_solution_by_hand() {
        let eye = Matrix::identity(2, 2);
        let c = Vector::from_vec(vec![-1.0, 0.0]);
        let sol = solve_trs(&eye, &eye, &c, 0.5).unwrap();
        assert!((sol.alpha[0] - 0.5).abs() < 1e-12);
        assert!(sol.alpha[1].abs() < 1e-15);
        assert!((sol.multiplier - 1.0).abs() < 1e-10);
        assert!(sol.on_boundary);
    }

    #[test]
    fn interior_newton_point() {
        let eye = Matrix::identity(2, 2);
        let c = Vector::from_vec(vec![-1.0, 0.0]);
        let sol = solve_trs(&eye, &eye, &c, 2.0).unwrap();
        assert_eq!(sol.alpha, Vector::from_vec(vec![1.0, 0.0]));
        assert_eq!(sol.multiplier, 0.0);
        assert!(!sol.on_boundary);
        assert_eq!(sol.model_decrease, 0.5);
    }

    #[test]
    fn one_dimensional_case_is_cauchy_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let gnorm: f64 = rng.gen_range(0.1..3.0);
            let h: f64 = rng.gen_range(0.01..5.0);
            let delta: f64 = rng.gen_range(0.01..3.0);
            // V = [-g]: G = ‖g‖², c = -‖g‖², Q = g^T H g
            let gm = Matrix::from_element(1, 1, gnorm * gnorm);
            let c = Vector::from_element(1, -gnorm * gnorm);
            let q = Matrix::from_element(1, 1, h);
            let exact = solve_trs(&q, &gm, &c, delta).unwrap();
            let cauchy = cauchy_point(&q, &gm, &c, gnorm, h, delta).unwrap();
            let closed = (gnorm * gnorm / h).min(delta / gnorm);
            assert!((exact.alpha[0] - closed).abs() <= 1e-10 * closed);
            assert!((cauchy.alpha[0] - closed).abs() <= 1e-12 * closed);
        }
    }

    #[test]
    fn cauchy_tau_branches() {
        // ‖g‖ = 2, Δ = 1, h = 16 → τ = 8 / 16
        assert_eq!(cauchy_tau(2.0, 16.0, 1.0), 0.5);
        assert_eq!(cauchy_tau(2.0, 8.0, 1.0), 1.0);
        assert_eq!(cauchy_tau(2.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn cauchy_full_step_reaches_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = Matrix::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
        let gvec = -v.column(0).into_owned();
        let gm = v.tr_mul(&v);
        let c = v.tr_mul(&gvec);
        let q = random_pd(&mut rng, 3);
        let gnorm = gvec.norm();
        let delta = 0.3;
        let h_small = 0.5 * gnorm.powi(3) / delta;
        let sol = cauchy_point(&q, &gm, &c, gnorm, h_small, delta).unwrap();
        assert!(((&v * &sol.alpha).norm() - delta).abs() <= 1e-12 * delta);
        // step is -Δ g/‖g‖
        let step = &v * &sol.alpha;
        assert!((step + &gvec * (delta / gnorm)).norm() <= 1e-12);
    }

    #[test]
    fn cauchy_decrease_meets_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let dim = rng.gen_range(4..9);
            let l = rng.gen_range(1..4);
            let h_full = random_pd(&mut rng, dim);
            let gvec = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let mut cols = vec![-&gvec];
            for _ in 1..l {
                cols.push(Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)));
            }
            let v = Matrix::from_columns(&cols);
            let gm = v.tr_mul(&v);
            let c = v.tr_mul(&gvec);
            let q = v.tr_mul(&(&h_full * &v));
            let h_quad = gvec.dot(&(&h_full * &gvec));
            let h_norm = SymEigen::new(&h_full).max();
            let delta = rng.gen_range(0.01..2.0);
            let cauchy = cauchy_point(&q, &gm, &c, gvec.norm(), h_quad, delta).unwrap();
            let exact = solve_trs(&q, &gm, &c, delta).unwrap();
            let bound = cauchy_decrease_bound(gvec.norm(), delta, h_norm);
            assert!(cauchy.model_decrease >= bound - 1e-12);
            assert!(exact.model_decrease >= cauchy.model_decrease - 1e-12);
            assert!(exact.step_norm <= delta * (1.0 + 1e-10));
        }
    }

    #[test]
    fn kkt_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let dim = rng.gen_range(1..4);
            let q = random_pd(&mut rng, dim);
            let gm = random_pd(&mut rng, dim);
            let c = Vector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
            let delta = rng.gen_range(0.05..2.0);
            let sol = solve_trs(&q, &gm, &c, delta).unwrap();
            let stationarity = (&q + &gm * sol.multiplier) * &sol.alpha + &c;
            assert!(stationarity.norm() <= 1e-8 * (1.0 + c.norm()));
            let slack = delta * delta - sol.alpha.dot(&(&gm * &sol.alpha));
            assert!(sol.multiplier * slack <= 1e-8 * delta * delta);
            assert!(sol.multiplier >= 0.0 && sol.model_decrease >= 0.0);
        }
    }

    #[test]
    fn indefinite_q_is_rejected() {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        let eye = Matrix::identity(2, 2);
        let c = Vector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            solve_trs(&q, &eye, &c, 1.0),
            Err(Error::NotPositiveDefinite("Q"))
        ));
    }

    #[test]
    fn semidefinite_q_is_regularized() {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        let eye = Matrix::identity(2, 2);
        let c = Vector::from_vec(vec![1.0, 1.0]);
        let sol = solve_trs(&q, &eye, &c, 1.0).unwrap();
        assert!(sol.regularized);
        assert!(sol.on_boundary);
    }

    #[test]
    fn non_pd_gram_is_rejected() {
        let g = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        let eye = Matrix::identity(2, 2);
        let c = Vector::from_vec(vec![1.0, 1.0]);
        assert!(solve_trs(&eye, &g, &c, 1.0).is_err());
    }
}
