//! Small dense symmetric eigenproblems.
//!
//! The reduced models are at most a handful of rows but can span many orders
//! of magnitude, so eigenpairs come from cyclic Jacobi rotations, which
//! resolve small eigenvalues to high relative accuracy.

use crate::problem::{Matrix, Vector};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `A = U diag(θ) U^T` of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub eigenvalues: Vector,
    /// Orthonormal eigenvectors, one per column.
    pub eigenvectors: Matrix,
}

impl SymEigen {
    /// Decomposes the symmetric part of `a`.
    pub fn new(a: &Matrix) -> Self {
        assert!(a.is_square(), "eigen-decomposition needs a square matrix");
        let n = a.nrows();
        let mut m = (a + a.transpose()) * 0.5;
        let mut u = Matrix::identity(n, n);
        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let (app, aqq) = (m[(p, p)], m[(q, q)]);
                    // Skip entries already negligible against both diagonals.
                    if apq.abs() <= f64::EPSILON * 0.5 * (app.abs() * aqq.abs()).sqrt()
                        && app != 0.0
                        && aqq != 0.0
                    {
                        m[(p, q)] = 0.0;
                        m[(q, p)] = 0.0;
                        continue;
                    }
                    rotated = true;
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / t.hypot(1.0);
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    for k in 0..n {
                        let (ukp, ukq) = (u[(k, p)], u[(k, q)]);
                        u[(k, p)] = c * ukp - s * ukq;
                        u[(k, q)] = s * ukp + c * ukq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        Self {
            eigenvalues: m.diagonal(),
            eigenvectors: u,
        }
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.min()
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.max()
    }
}
