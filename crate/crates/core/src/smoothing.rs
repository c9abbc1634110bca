//! The projection residual `F_N(z) = z - mid(l, u, z - H(z))` and its smooth
//! approximations `F(z, µ) = z - h(z, µ)`.
//!
//! `h_i` replaces `mid(l_i, u_i, q_i)` by its convolution with a density
//! `ρ(t)` scaled by `µ`. Three densities are supported, each with a closed
//! form for `h_i` and for the Jacobian weight
//!
//! ```text
//! w_i = ∂h_i/∂q_i = ∫_{(q_i - u_i)/µ}^{(q_i - l_i)/µ} ρ(t) dt ∈ [0, 1],
//! ```
//!
//! so that row `i` of `∇F` is `e_i - w_i (e_i - ∇H_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BoxBounds, Problem, Vector};

/// Componentwise median of `(l_i, u_i, q_i)`.
pub fn mid(lower: &Vector, upper: &Vector, q: &Vector) -> Vector {
    Vector::from_iterator(
        q.len(),
        q.iter()
            .zip(lower.iter().zip(upper.iter()))
            .map(|(&qi, (&l, &u))| mid_scalar(l, u, qi)),
    )
}

fn mid_scalar(l: f64, u: f64, q: f64) -> f64 {
    if q < l {
        l
    } else if q > u {
        u
    } else {
        q
    }
}

/// `q(z) = z - H(z)`.
pub fn fixed_point_map<P: Problem + ?Sized>(problem: &P, z: &Vector) -> Vector {
    z - problem.eval_h(z)
}

/// `F_N(z) = z - mid(l, u, z - H(z))`.
pub fn f_nonsmooth<P: Problem + ?Sized>(problem: &P, z: &Vector) -> Vector {
    let b = problem.bounds();
    z - mid(b.lower(), b.upper(), &fixed_point_map(problem, z))
}

/// Density used to smooth the mid operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKind {
    /// `ρ(t) = 1` on `|t| ≤ 1/2`; piecewise quadratic `h`.
    #[default]
    Uniform,
    /// `ρ(t) = e^{-t} / (1 + e^{-t})²`.
    Logistic,
    /// `ρ(t) = 2 / (t² + 4)^{3/2}`.
    CauchyLike,
}

impl SmoothingKind {
    /// Per-coordinate smoothing error constant: `|h_i - mid_i| ≤ c µ`.
    pub fn coordinate_constant(self) -> f64 {
        match self {
            SmoothingKind::Uniform => 0.125,
            SmoothingKind::Logistic => 2.0 * std::f64::consts::LN_2,
            SmoothingKind::CauchyLike => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SmoothingKind::Uniform => "uniform",
            SmoothingKind::Logistic => "logistic",
            SmoothingKind::CauchyLike => "cauchy_like",
        }
    }
}

impl std::str::FromStr for SmoothingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "logistic" => Ok(Self::Logistic),
            "cauchy_like" | "cauchy" => Ok(Self::CauchyLike),
            other => Err(format!("unknown smoothing kind `{other}`")),
        }
    }
}

/// `κ` with `‖F(z, µ) - F_N(z)‖ ≤ κ µ` in dimension `dim = n + m`.
pub fn kappa(kind: SmoothingKind, dim: usize) -> f64 {
    (dim as f64).sqrt() * kind.coordinate_constant()
}

/// A density together with a fixed smoothing parameter `µ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub kind: SmoothingKind,
    pub mu: f64,
}

impl Smoothing {
    /// Validates `µ > 0`, and `µ ≤ min_i (u_i - l_i)` for the uniform density.
    pub fn new(kind: SmoothingKind, mu: f64, bounds: &BoxBounds) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: format!("smoothing parameter must be positive, got {mu}"),
            });
        }
        if kind == SmoothingKind::Uniform && mu > bounds.min_width() {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: format!(
                    "uniform smoothing needs mu <= min(u - l) = {}, got {mu}",
                    bounds.min_width()
                ),
            });
        }
        Ok(Self { kind, mu })
    }

    /// Smoothed median `h_i` and its weight `w_i` for one coordinate.
    pub fn component(&self, l: f64, u: f64, q: f64) -> (f64, f64) {
        let mu = self.mu;
        match self.kind {
            SmoothingKind::Uniform => {
                let half = 0.5 * mu;
                if (u - q).abs() <= half {
                    let h = 0.5 * (q + u) - (u - q) * (u - q) / (2.0 * mu) - mu / 8.0;
                    (h, 0.5 + (u - q) / mu)
                } else if (l - q).abs() <= half {
                    let h = 0.5 * (q + l) + (l - q) * (l - q) / (2.0 * mu) + mu / 8.0;
                    (h, 0.5 - (l - q) / mu)
                } else if q < l {
                    (l, 0.0)
                } else if q > u {
                    (u, 0.0)
                } else {
                    (q, 1.0)
                }
            }
            SmoothingKind::Logistic => {
                use crate::activation::{logistic, softplus};
                let a = (l - q) / mu;
                let b = (u - q) / mu;
                let h = u + mu * softplus(a) - mu * softplus(b);
                (h, logistic(b) - logistic(a))
            }
            SmoothingKind::CauchyLike => {
                let ra = ((q - l) * (q - l) + 4.0 * mu * mu).sqrt();
                let rb = ((u - q) * (u - q) + 4.0 * mu * mu).sqrt();
                let h = 0.5 * (ra - rb + u + l);
                (h, 0.5 * ((q - l) / ra + (u - q) / rb))
            }
        }
    }

    /// Linearizes `F(·, µ)` at `z`: one evaluation of `H`.
    pub fn linearize<P: Problem + ?Sized>(&self, problem: &P, z: &Vector) -> SmoothResidual {
        let q = fixed_point_map(problem, z);
        let b = problem.bounds();
        let dim = z.len();
        let mut f = Vector::zeros(dim);
        let mut f_nonsmooth = Vector::zeros(dim);
        let mut weights = Vector::zeros(dim);
        for i in 0..dim {
            let (l, u) = (b.lower()[i], b.upper()[i]);
            let (h, w) = self.component(l, u, q[i]);
            f[i] = z[i] - h;
            f_nonsmooth[i] = z[i] - mid_scalar(l, u, q[i]);
            weights[i] = w;
        }
        SmoothResidual {
            z: z.clone(),
            q,
            f,
            f_nonsmooth,
            weights,
        }
    }
}

/// `F(z, µ)`, `F_N(z)`, `q(z)` and the Jacobian weights at one point.
#[derive(Debug, Clone)]
pub struct SmoothResidual {
    pub z: Vector,
    pub q: Vector,
    pub f: Vector,
    pub f_nonsmooth: Vector,
    pub weights: Vector,
}

impl SmoothResidual {
    /// `J(z, µ) v = v - w ⊙ (v - ∇H v)`.
    pub fn jvp<P: Problem + ?Sized>(&self, problem: &P, v: &Vector) -> Vector {
        let mut out = v.clone();
        if self.weights.iter().all(|&w| w == 0.0) {
            return out;
        }
        let hv = problem.eval_h_jvp(&self.z, v);
        for i in 0..out.len() {
            out[i] -= self.weights[i] * (v[i] - hv[i]);
        }
        out
    }

    /// `J(z, µ)^T u = u - w ⊙ u + ∇H^T (w ⊙ u)`.
    pub fn vjp<P: Problem + ?Sized>(&self, problem: &P, u: &Vector) -> Vector {
        let wu = self.weights.component_mul(u);
        let mut out = u - &wu;
        if wu.iter().any(|&x| x != 0.0) {
            out += problem.eval_h_vjp(&self.z, &wu);
        }
        out
    }
}

/// `F(z, µ)`.
pub fn f_smooth<P: Problem + ?Sized>(problem: &P, z: &Vector, smoothing: &Smoothing) -> Vector {
    smoothing.linearize(problem, z).f
}

/// `J(z, µ) v`.
pub fn jvp_f_smooth<P: Problem + ?Sized>(
    problem: &P,
    z: &Vector,
    v: &Vector,
    smoothing: &Smoothing,
) -> Vector {
    smoothing.linearize(problem, z).jvp(problem, v)
}

/// `J(z, µ)^T w`.
pub fn vjp_f_smooth<P: Problem + ?Sized>(
    problem: &P,
    z: &Vector,
    w: &Vector,
    smoothing: &Smoothing,
) -> Vector {
    smoothing.linearize(problem, z).vjp(problem, w)
}
