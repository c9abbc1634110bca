//! Structured quasi-Newton approximation of `∇²r`:
//!
//! ```text
//! H = J^T J + A        if the last curvature test passed,
//! H = J^T J + ‖F‖ I    otherwise,
//! ```
//!
//! where `A` receives a BFGS-style rank-two update along accepted steps `s`
//! with `v = (J_+ - J)^T F_+ · ‖F_+‖ / ‖F‖`, guarded by `v^T s / s^T s ≥ ε̄`.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Matrix, Problem, Vector};
use crate::smoothing::SmoothResidual;

/// Default curvature guard `ε̄`.
pub const DEFAULT_GUARD_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiNewtonState {
    a: Matrix,
    guard_eps: f64,
    cap: Option<f64>,
    last_guard_passed: bool,
}

/// What [`QuasiNewtonState::update`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// Rank-two update applied; `secant_residual = ‖A_+ s - v‖`.
    Updated { secant_residual: f64 },
    /// Curvature test failed, `A` unchanged.
    GuardFailed,
    /// `s^T A s ≤ 0`: positive definiteness was lost and `A` was reset to `‖F‖ I`.
    Reset,
    /// The updated matrix failed Cholesky in floating point; the update was
    /// rolled back and the fallback shift is used.
    RolledBack,
}

impl QuasiNewtonState {
    /// `A_0 = ‖F_0‖ I`, or `I` when `‖F_0‖ = 0`.
    pub fn new(dim: usize, f0_norm: f64, guard_eps: f64, cap: Option<f64>) -> Self {
        assert!(dim >= 1, "dimension must be at least one");
        let scale = if f0_norm > 0.0 { f0_norm } else { 1.0 };
        Self {
            a: Matrix::identity(dim, dim) * scale,
            guard_eps,
            cap,
            last_guard_passed: false,
        }
    }

    pub fn with_matrix(
        a: Matrix,
        guard_eps: f64,
        cap: Option<f64>,
        last_guard_passed: bool,
    ) -> Self {
        Self {
            a,
            guard_eps,
            cap,
            last_guard_passed,
        }
    }

    pub fn a_matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn guard_eps(&self) -> f64 {
        self.guard_eps
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    pub fn last_guard_passed(&self) -> bool {
        self.last_guard_passed
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `v^T s / s^T s ≥ ε̄`.
    pub fn guard_holds(&self, s: &Vector, v: &Vector) -> bool {
        v.dot(s) / s.norm_squared() >= self.guard_eps
    }

    /// Applies the guarded update for an accepted step `s`. `f_norm` is the
    /// residual norm at the new point, used if `A` has to be reset.
    pub fn update(&mut self, s: &Vector, v: &Vector, f_norm: f64) -> Result<UpdateOutcome> {
        if s.len() != self.dim() || v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "quasi-Newton pair",
                expected: self.dim(),
                got: s.len().min(v.len()),
            });
        }
        let ss = s.norm_squared();
        if ss == 0.0 {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: "quasi-Newton step must be nonzero".into(),
            });
        }
        if !self.guard_holds(s, v) {
            self.last_guard_passed = false;
            return Ok(UpdateOutcome::GuardFailed);
        }
        let a_s = &self.a * s;
        let s_a_s = s.dot(&a_s);
        if !(s_a_s > 0.0) {
            let dim = self.dim();
            let scale = if f_norm > 0.0 { f_norm } else { 1.0 };
            self.a = Matrix::identity(dim, dim) * scale;
            self.last_guard_passed = false;
            log::warn!("quasi-Newton matrix lost positive definiteness (s^T A s = {s_a_s}); reset");
            return Ok(UpdateOutcome::Reset);
        }
        let v_s = v.dot(s);
        let previous = self.a.clone();
        self.a.ger(-1.0 / s_a_s, &a_s, &a_s, 1.0);
        self.a.ger(1.0 / v_s, v, v, 1.0);
        // Rank-one updates round (αx_i)x_j and (αx_j)x_i differently.
        let sym = (&self.a + self.a.transpose()) * 0.5;
        self.a = sym;
        if !self.is_positive_definite() {
            self.a = previous;
            self.last_guard_passed = false;
            log::debug!("quasi-Newton update lost definiteness in floating point; rolled back");
            return Ok(UpdateOutcome::RolledBack);
        }
        self.last_guard_passed = true;
        let secant_residual = (&self.a * s - v).norm();
        Ok(UpdateOutcome::Updated { secant_residual })
    }

    /// `A v` when the last test passed, `‖F‖ v` otherwise.
    pub fn apply_shift(&self, v: &Vector, f_norm: f64) -> Vector {
        if self.last_guard_passed {
            &self.a * v
        } else {
            v * f_norm
        }
    }

    /// `V^T A V` or `‖F‖ V^T V`.
    pub fn project_shift(&self, v_cols: &Matrix, gram: &Matrix, f_norm: f64) -> Matrix {
        if self.last_guard_passed {
            v_cols.tr_mul(&(&self.a * v_cols))
        } else {
            gram * f_norm
        }
    }

    /// Upper bound on the norm of the shift term: `‖A‖_F` or `‖F‖`.
    pub fn shift_norm_bound(&self, f_norm: f64) -> f64 {
        if self.last_guard_passed {
            self.a.norm()
        } else {
            f_norm
        }
    }

    /// Whether the cap `M` replaces `H` by `M I`, given an upper bound on
    /// the `J^T J` part.
    pub fn is_capped(&self, jtj_bound: f64, f_norm: f64) -> bool {
        self.cap
            .is_some_and(|m| jtj_bound + self.shift_norm_bound(f_norm) > m)
    }

    /// `H v = J^T (J v) + (A v | ‖F‖ v)`, or `M v` when `capped`.
    pub fn h_apply<P: Problem + ?Sized>(
        &self,
        problem: &P,
        lin: &SmoothResidual,
        v: &Vector,
        capped: bool,
    ) -> Vector {
        if capped {
            if let Some(m) = self.cap {
                return v * m;
            }
        }
        let jv = lin.jvp(problem, v);
        lin.vjp(problem, &jv) + self.apply_shift(v, lin.f.norm())
    }

    /// Cholesky factorization of `A` succeeds.
    pub fn is_positive_definite(&self) -> bool {
        Cholesky::new(self.a.clone()).is_some()
    }

    /// Largest asymmetry `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.a - self.a.transpose()).amax()
    }
}
