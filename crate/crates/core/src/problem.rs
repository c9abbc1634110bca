//! Box-constrained min-max problems written as an operator over `z = (x, y)`.
//!
//! A problem `min_x max_y f(x, y)` over the box `[l, u]` is represented by its
//! stacked gradient field
//!
//! ```text
//! H(z) = ( ∇_x f(x, y), -∇_y f(x, y) )
//! ```
//!
//! together with directional derivatives of `H`. First-order stationary points
//! are the solutions of `0 ∈ H(z) + N_box(z)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// The box `[lower, upper]` holding `z = (x, y)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoxBounds {
    lower: Vector,
    upper: Vector,
}

impl BoxBounds {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "upper bound",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (index, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidBounds {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Vector::from_element(dim, lo), Vector::from_element(dim, hi))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    /// Smallest side length, `min_i (u_i - l_i)`.
    pub fn min_width(&self) -> f64 {
        self.upper
            .iter()
            .zip(self.lower.iter())
            .map(|(u, l)| u - l)
            .fold(f64::INFINITY, f64::min)
    }

    /// Euclidean projection onto the box.
    pub fn project(&self, z: &Vector) -> Vector {
        crate::smoothing::mid(&self.lower, &self.upper, z)
    }

    pub fn contains(&self, z: &Vector) -> bool {
        z.len() == self.dim()
            && z.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }
}

/// A box-constrained min-max problem given through its stacked gradient field.
///
/// Only [`Problem::eval_h`] is mandatory. Directional derivatives fall back to
/// central finite differences, and the transposed action falls back to one
/// forward derivative per coordinate.
pub trait Problem: Send + Sync {
    fn dim_x(&self) -> usize;

    fn dim_y(&self) -> usize;

    fn dim(&self) -> usize {
        self.dim_x() + self.dim_y()
    }

    fn bounds(&self) -> &BoxBounds;

    /// `H(z) = (∇_x f, -∇_y f)`.
    fn eval_h(&self, z: &Vector) -> Vector;

    /// `∇H(z) · v`.
    fn eval_h_jvp(&self, z: &Vector, v: &Vector) -> Vector {
        fd_jvp(self, z, v, default_fd_step(z))
    }

    /// `∇H(z)^T · w`.
    fn eval_h_vjp(&self, z: &Vector, w: &Vector) -> Vector {
        vjp_by_columns(self, z, w)
    }

    /// Number of samples averaged into `H` (1 for deterministic problems).
    fn sample_count(&self) -> usize {
        1
    }

    /// The saddle objective `f(x, y)`, when the problem can evaluate it.
    fn objective(&self, _z: &Vector) -> Option<f64> {
        None
    }
}

/// Step used by the finite-difference fallback: `1e-6 · (1 + ‖z‖_∞)`.
pub fn default_fd_step(z: &Vector) -> f64 {
    1e-6 * (1.0 + z.amax())
}

/// Central difference `(H(z + h v) - H(z - h v)) / (2 h)`.
pub fn fd_jvp<P: Problem + ?Sized>(problem: &P, z: &Vector, v: &Vector, step: f64) -> Vector {
    assert!(step > 0.0, "finite-difference step must be positive");
    let plus = problem.eval_h(&(z + v * step));
    let minus = problem.eval_h(&(z - v * step));
    (plus - minus) / (2.0 * step)
}

/// `∇H(z)^T w` assembled from one forward derivative per coordinate.
pub fn vjp_by_columns<P: Problem + ?Sized>(problem: &P, z: &Vector, w: &Vector) -> Vector {
    let dim = z.len();
    let mut out = Vector::zeros(dim);
    let mut e = Vector::zeros(dim);
    for j in 0..dim {
        e[j] = 1.0;
        out[j] = problem.eval_h_jvp(z, &e).dot(w);
        e[j] = 0.0;
    }
    out
}

/// Negates the `y` block (indices `n..`) in place.
///
/// With `D = diag(I_n, -I_m)` and `H = D ∇f`, the Jacobian of `H` is
/// `D ∇²f`, so `∇H^T w = ∇²f (D w) = D (∇H (D w))`. Saddle problems use this
/// to get the transposed action from a single forward derivative.
pub fn flip_y(v: &mut Vector, n: usize) {
    for value in v.iter_mut().skip(n) {
        *value = -*value;
    }
}

/// `∇H(z)^T w` for any `H` that is the signed gradient of a scalar saddle
/// function.
pub fn saddle_vjp<P: Problem + ?Sized>(problem: &P, z: &Vector, w: &Vector) -> Vector {
    let n = problem.dim_x();
    let mut flipped = w.clone();
    flip_y(&mut flipped, n);
    let mut out = problem.eval_h_jvp(z, &flipped);
    flip_y(&mut out, n);
    out
}

/// The bilinear game `f(x, y) = x^T B y + a^T x - b^T y`, so that
/// `H(z) = (B y + a, -B^T x + b)` is affine with constant Jacobian.
#[derive(Debug, Clone)]
pub struct BilinearGame {
    coupling: Matrix,
    shift_x: Vector,
    shift_y: Vector,
    bounds: BoxBounds,
}

impl BilinearGame {
    pub fn new(
        coupling: Matrix,
        shift_x: Vector,
        shift_y: Vector,
        bounds: BoxBounds,
    ) -> Result<Self> {
        let (n, m) = coupling.shape();
        if shift_x.len() != n {
            return Err(Error::DimensionMismatch {
                what: "x shift",
                expected: n,
                got: shift_x.len(),
            });
        }
        if shift_y.len() != m {
            return Err(Error::DimensionMismatch {
                what: "y shift",
                expected: m,
                got: shift_y.len(),
            });
        }
        if bounds.dim() != n + m {
            return Err(Error::DimensionMismatch {
                what: "bounds",
                expected: n + m,
                got: bounds.dim(),
            });
        }
        Ok(Self {
            coupling,
            shift_x,
            shift_y,
            bounds,
        })
    }

    pub fn coupling(&self) -> &Matrix {
        &self.coupling
    }

    /// The constant Jacobian `[[0, B], [-B^T, 0]]`.
    pub fn jacobian(&self) -> Matrix {
        let (n, m) = self.coupling.shape();
        let mut jac = Matrix::zeros(n + m, n + m);
        jac.view_mut((0, n), (n, m)).copy_from(&self.coupling);
        jac.view_mut((n, 0), (m, n))
            .copy_from(&(-self.coupling.transpose()));
        jac
    }
}

impl Problem for BilinearGame {
    fn dim_x(&self) -> usize {
        self.coupling.nrows()
    }

    fn dim_y(&self) -> usize {
        self.coupling.ncols()
    }

    fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }

    fn eval_h(&self, z: &Vector) -> Vector {
        let n = self.dim_x();
        let x = z.rows(0, n);
        let y = z.rows(n, self.dim_y());
        let hx = &self.coupling * y + &self.shift_x;
        let hy = -(self.coupling.tr_mul(&x)) + &self.shift_y;
        stack(&hx, &hy)
    }

    fn eval_h_jvp(&self, _z: &Vector, v: &Vector) -> Vector {
        let n = self.dim_x();
        let vx = v.rows(0, n);
        let vy = v.rows(n, self.dim_y());
        stack(&(&self.coupling * vy), &(-(self.coupling.tr_mul(&vx))))
    }

    fn eval_h_vjp(&self, z: &Vector, w: &Vector) -> Vector {
        saddle_vjp(self, z, w)
    }

    fn objective(&self, z: &Vector) -> Option<f64> {
        let n = self.dim_x();
        let x = z.rows(0, n);
        let y = z.rows(n, self.dim_y());
        Some(x.dot(&(&self.coupling * y)) + self.shift_x.dot(&x) - self.shift_y.dot(&y))
    }
}

pub(crate) fn stack(top: &Vector, bottom: &Vector) -> Vector {
    Vector::from_iterator(
        top.len() + bottom.len(),
        top.iter().chain(bottom.iter()).copied(),
    )
}

/// Per-sample loss `ℓ(x, y, ξ^i)` of a sample average approximation.
pub trait SaaLoss: Send + Sync {
    fn dim_x(&self) -> usize;

    fn dim_y(&self) -> usize;

    fn sample_count(&self) -> usize;

    /// `ℓ(x, y, ξ^i)`.
    fn loss(&self, z: &Vector, sample: usize) -> f64;

    /// `(∇_x ℓ, -∇_y ℓ)` at sample `i`.
    fn grad(&self, z: &Vector, sample: usize) -> Vector;

    /// Directional derivative of [`SaaLoss::grad`] along `v`.
    fn hvp(&self, z: &Vector, sample: usize, v: &Vector) -> Vector;
}

/// `f̂_N(x, y) = (1/N) Σ ℓ(x, y, ξ^i)` as a [`Problem`].
///
/// Sums run in pairwise order over the fixed sample index range, so results
/// are deterministic and insensitive to sample order up to roundoff.
#[derive(Debug, Clone)]
pub struct SaaProblem<L> {
    loss: L,
    bounds: BoxBounds,
}

impl<L: SaaLoss> SaaProblem<L> {
    pub fn new(loss: L, bounds: BoxBounds) -> Result<Self> {
        if loss.sample_count() == 0 {
            return Err(Error::EmptySamples);
        }
        let dim = loss.dim_x() + loss.dim_y();
        if bounds.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: "bounds",
                expected: dim,
                got: bounds.dim(),
            });
        }
        Ok(Self { loss, bounds })
    }

    pub fn loss(&self) -> &L {
        &self.loss
    }

    fn mean_of<F: Fn(usize) -> Vector>(&self, f: F) -> Vector {
        let count = self.loss.sample_count();
        pairwise_sum(0, count, &f) / count as f64
    }
}

fn pairwise_sum<F: Fn(usize) -> Vector>(start: usize, end: usize, f: &F) -> Vector {
    match end - start {
        1 => f(start),
        len => {
            let mid = start + len / 2;
            pairwise_sum(start, mid, f) + pairwise_sum(mid, end, f)
        }
    }
}

fn pairwise_sum_scalar<F: Fn(usize) -> f64>(start: usize, end: usize, f: &F) -> f64 {
    match end - start {
        1 => f(start),
        len => {
            let mid = start + len / 2;
            pairwise_sum_scalar(start, mid, f) + pairwise_sum_scalar(mid, end, f)
        }
    }
}

impl<L: SaaLoss> Problem for SaaProblem<L> {
    fn dim_x(&self) -> usize {
        self.loss.dim_x()
    }

    fn dim_y(&self) -> usize {
        self.loss.dim_y()
    }

    fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }

    fn eval_h(&self, z: &Vector) -> Vector {
        self.mean_of(|i| self.loss.grad(z, i))
    }

    fn eval_h_jvp(&self, z: &Vector, v: &Vector) -> Vector {
        self.mean_of(|i| self.loss.hvp(z, i, v))
    }

    fn eval_h_vjp(&self, z: &Vector, w: &Vector) -> Vector {
        saddle_vjp(self, z, w)
    }

    fn sample_count(&self) -> usize {
        self.loss.sample_count()
    }

    fn objective(&self, z: &Vector) -> Option<f64> {
        let count = self.loss.sample_count();
        Some(pairwise_sum_scalar(0, count, &|i| self.loss.loss(z, i)) / count as f64)
    }
}
