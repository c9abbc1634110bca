//! First-order baselines: projected simultaneous gradient descent-ascent and
//! alternating projected Adam.
//!
//! Both descend along `H = (∇_x f, -∇_y f)`, so `x` moves downhill and `y`
//! uphill. Traces use the same record type as the trust-region solver with
//! the trust-region columns set to NaN.

use std::ops::AddAssign;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::driver::{IterationRecord, StopReason};
use crate::error::{Error, Result};
use crate::problem::{Problem, Vector};
use crate::residual::gradient_at;
use crate::smoothing::{Smoothing, SmoothingKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Gda,
    #[default]
    AltAdam,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gda => "gda",
            Self::AltAdam => "alt_adam",
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gda" => Ok(Self::Gda),
            "alt_adam" | "adam" => Ok(Self::AltAdam),
            other => Err(format!(
                "unknown baseline `{other}` (expected gda|alt_adam)"
            )),
        }
    }
}

/// `P_box(z - lr · H(z))`.
pub fn gda_step<P: Problem + ?Sized>(problem: &P, z: &Vector, lr: f64) -> Vector {
    problem.bounds().project(&(z - problem.eval_h(z) * lr))
}

/// Bias-corrected Adam moments for one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vector,
    pub v: Vector,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            m: Vector::zeros(dim),
            v: Vector::zeros(dim),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Consumes one gradient and returns the displacement to add.
    pub fn step(&mut self, grad: &Vector) -> Vector {
        self.t += 1;
        let t = self.t as i32;
        self.m = &self.m * self.beta1 + grad * (1.0 - self.beta1);
        self.v = &self.v * self.beta2 + grad.component_mul(grad) * (1.0 - self.beta2);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        Vector::from_fn(grad.len(), |i, _| {
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            -self.lr * m_hat / (v_hat.sqrt() + self.eps)
        })
    }
}

/// Adam states for the `x` and `y` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltAdam {
    pub x: AdamState,
    pub y: AdamState,
}

impl AltAdam {
    pub fn new(n: usize, m: usize, lr: f64) -> Self {
        Self {
            x: AdamState::new(n, lr),
            y: AdamState::new(m, lr),
        }
    }

    /// Updates `x` with `∇_x f(x, y)`, then `y` with `-∇_y f(x⁺, y)`, each
    /// followed by projection onto its box.
    pub fn step<P: Problem + ?Sized>(&mut self, problem: &P, z: &Vector) -> Vector {
        let n = problem.dim_x();
        let m = problem.dim_y();
        let h = problem.eval_h(z);
        let mut next = z.clone();
        let dx = self.x.step(&h.rows(0, n).into_owned());
        next.rows_mut(0, n).add_assign(&dx);
        let mut next = problem.bounds().project(&next);
        let h = problem.eval_h(&next);
        let dy = self.y.step(&h.rows(n, m).into_owned());
        next.rows_mut(n, m).add_assign(&dy);
        problem.bounds().project(&next)
    }
}

/// Runs `steps` alternating Adam updates from `z0`.
pub fn warm_start_adam<P: Problem + ?Sized>(
    problem: &P,
    z0: &Vector,
    steps: usize,
    lr: f64,
) -> Vector {
    let mut adam = AltAdam::new(problem.dim_x(), problem.dim_y(), lr);
    let mut z = z0.clone();
    for _ in 0..steps {
        z = adam.step(problem, &z);
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: Baseline,
    pub lr: f64,
    pub max_iters: usize,
    /// Stop when `‖F(z, µ)‖ ≤ eps_stop`.
    pub eps_stop: f64,
    pub mu: f64,
    pub smoothing: SmoothingKind,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: Baseline::AltAdam,
            lr: 1e-3,
            max_iters: 2000,
            eps_stop: 1e-5,
            mu: 1e-8,
            smoothing: SmoothingKind::Uniform,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lr",
                reason: format!("must be finite and non-negative, got {}", self.lr),
            });
        }
        if !(self.mu > 0.0 && self.eps_stop > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mu/eps_stop",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub z: Vector,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
    pub iterations: usize,
    pub f_norm: f64,
    pub fn_norm: f64,
}

/// Iterates the chosen baseline, recording the same quantities as the
/// trust-region trace at every iterate.
pub fn run_baseline<P, F>(
    problem: &P,
    config: &BaselineConfig,
    z0: Vector,
    mut observer: F,
) -> Result<BaselineReport>
where
    P: Problem + ?Sized,
    F: FnMut(&IterationRecord) -> Result<()>,
{
    config.validate()?;
    if z0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            what: "z0",
            expected: problem.dim(),
            got: z0.len(),
        });
    }
    let smoothing = Smoothing::new(config.smoothing, config.mu, problem.bounds())?;
    let started = Instant::now();
    let mut adam = AltAdam::new(problem.dim_x(), problem.dim_y(), config.lr);
    let mut z = z0;
    let mut trace = Vec::new();
    let mut k = 0;
    loop {
        let lin = smoothing.linearize(problem, &z);
        let grad = gradient_at(problem, &lin);
        if !grad.f_norm.is_finite() {
            return Err(Error::NonFinite {
                what: "F(z, mu)",
                iteration: k,
            });
        }
        let stop = if grad.f_norm <= config.eps_stop {
            Some(StopReason::Converged)
        } else if k >= config.max_iters {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok(BaselineReport {
                z,
                trace,
                stop,
                iterations: k,
                f_norm: grad.f_norm,
                fn_norm: grad.fn_norm,
            });
        }
        let next = match config.method {
            Baseline::Gda => gda_step(problem, &z, config.lr),
            Baseline::AltAdam => adam.step(problem, &z),
        };
        let record = IterationRecord {
            k,
            f_norm: grad.f_norm,
            fn_norm: grad.fn_norm,
            g_norm: grad.g.norm(),
            r_value: grad.r_value,
            delta: f64::NAN,
            rho: f64::NAN,
            accepted: true,
            on_boundary: false,
            guard_passed: false,
            model_decrease: f64::NAN,
            cauchy_bound: f64::NAN,
            h_norm_ub: f64::NAN,
            step_norm: (&next - &z).norm(),
            subspace_dim: 0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        observer(&record)?;
        trace.push(record);
        z = next;
        k += 1;
    }
}
