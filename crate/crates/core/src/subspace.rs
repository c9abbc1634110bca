//! Subspace selection and the reduced quadratic model.
//!
//! Each iteration restricts the trust-region model to `span(V)`, where the
//! first column of `V` is always `-g` and the remaining columns come from the
//! recent history of accepted steps, residuals or gradients. The reduced
//! model is
//!
//! ```text
//! m(α) = r + c^T α + ½ α^T Q α,   G = V^T V,  c = V^T g,  Q = V^T H V.
//! ```

use std::collections::VecDeque;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymEigen;
use crate::problem::{Matrix, Problem, Vector};
use crate::quasi_newton::QuasiNewtonState;
use crate::smoothing::SmoothResidual;

/// Default relative tolerance of [`rank_filter`].
pub const RANK_TOL: f64 = 1e-6;

/// Which history fills the columns after `-g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum SubspaceKind {
    /// Past steps `z_k - z_{k-1}, z_{k-1} - z_{k-2}, …`.
    #[default]
    #[serde(rename = "vz")]
    Vz,
    /// Residuals `F(z_k), F(z_{k-1}), …`.
    #[serde(rename = "vf")]
    VF,
    /// Negated past gradients `-g_{k-1}, -g_{k-2}, …`.
    #[serde(rename = "vg")]
    Vg,
}

impl SubspaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SubspaceKind::Vz => "vz",
            SubspaceKind::VF => "vf",
            SubspaceKind::Vg => "vg",
        }
    }
}

impl std::str::FromStr for SubspaceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "vz" | "z" => Ok(Self::Vz),
            "vf" | "f" => Ok(Self::VF),
            "vg" | "g" => Ok(Self::Vg),
            other => Err(format!("unknown subspace kind `{other}`")),
        }
    }
}

/// Newest-first history of accepted iterates, each deque holding at most
/// `L - 1` items.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionHistory {
    capacity: usize,
    steps: VecDeque<Vector>,
    residuals: VecDeque<Vector>,
    gradients: VecDeque<Vector>,
}

impl DirectionHistory {
    /// History for a subspace of target dimension `l` (`l ≥ 1`).
    pub fn new(l: usize) -> Self {
        assert!(l >= 1, "subspace dimension must be at least one");
        Self {
            capacity: l - 1,
            ..Self::default()
        }
    }

    fn push(deque: &mut VecDeque<Vector>, item: Vector, capacity: usize) {
        if capacity == 0 {
            return;
        }
        deque.push_front(item);
        deque.truncate(capacity);
    }

    /// Records the residual of a point that just became the current iterate.
    pub fn enter_point(&mut self, f: &Vector) {
        Self::push(&mut self.residuals, f.clone(), self.capacity);
    }

    /// Records an accepted step `s` leaving a point with gradient `g_old`.
    pub fn accept_step(&mut self, s: &Vector, g_old: &Vector) {
        Self::push(&mut self.steps, s.clone(), self.capacity);
        Self::push(&mut self.gradients, g_old.clone(), self.capacity);
    }

    pub fn steps(&self) -> impl Iterator<Item = &Vector> {
        self.steps.iter()
    }

    pub fn residuals(&self) -> impl Iterator<Item = &Vector> {
        self.residuals.iter()
    }

    pub fn gradients(&self) -> impl Iterator<Item = &Vector> {
        self.gradients.iter()
    }
}

/// `[-g, d^1, …]` with the history columns newest-first.
pub fn collect_directions(
    kind: SubspaceKind,
    history: &DirectionHistory,
    g_now: &Vector,
) -> Matrix {
    let mut cols: Vec<Vector> = vec![-g_now];
    match kind {
        SubspaceKind::Vz => cols.extend(history.steps().cloned()),
        SubspaceKind::VF => cols.extend(history.residuals().cloned()),
        SubspaceKind::Vg => cols.extend(history.gradients().map(|g| -g)),
    }
    Matrix::from_columns(&cols)
}

/// Greedy left-to-right filter returning a well-conditioned basis of the
/// span of the independent columns.
///
/// A column is dropped when its residual after projection onto the kept
/// columns is at most `tol` times its own norm. The first column (`-g`) is
/// returned unchanged; every later column is replaced by its normalized
/// Gram-Schmidt residual scaled to `‖g‖`, so `V^T V ≈ ‖g‖² I`.
pub fn rank_filter(cols: &Matrix, tol: f64) -> Result<Matrix> {
    assert!(tol > 0.0, "rank tolerance must be positive");
    let first = cols.column(0).into_owned();
    let lead_norm = first.norm();
    if lead_norm == 0.0 || !lead_norm.is_finite() {
        return Err(Error::ZeroGradient);
    }
    let mut basis: Vec<Vector> = vec![&first / lead_norm];
    let mut kept: Vec<Vector> = vec![first];
    for j in 1..cols.ncols() {
        let col = cols.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        let mut residual = col.clone();
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&residual);
                residual.axpy(-proj, q, 1.0);
            }
        }
        let rnorm = residual.norm();
        if rnorm <= tol * norm {
            continue;
        }
        let unit = residual / rnorm;
        kept.push(&unit * lead_norm);
        basis.push(unit);
    }
    Ok(Matrix::from_columns(&kept))
}

/// Reduced quadratic model for one iteration.
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    pub v_cols: Matrix,
    /// `G = V^T V`.
    pub g_mat: Matrix,
    /// `c = V^T g`.
    pub c_vec: Vector,
    /// `Q = V^T H V`.
    pub q_mat: Matrix,
    /// `J V`, or `J^T V` in compatibility mode.
    pub jv_cols: Matrix,
    pub g_norm: f64,
    /// `g^T H g = Q_11`.
    pub h_quad: f64,
    /// Largest eigenvalue of `(JV)^T JV` relative to `G`.
    pub jtj_bound: f64,
    /// Certified upper bound on `‖H‖` over `span(V)`.
    pub h_norm_ub: f64,
    pub capped: bool,
}

/// How `J V` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum JacobianProduct {
    /// Forward directional derivatives `J d`.
    #[default]
    Forward,
    /// Gradients of `d^T F`, i.e. `J^T d`; equals `J d` only for symmetric `J`.
    Transpose,
}

/// Assembles `G`, `c`, `Q` from `L'` Jacobian products and the quasi-Newton
/// shift.
pub fn assemble_model<P: Problem + ?Sized>(
    problem: &P,
    lin: &SmoothResidual,
    qn: &QuasiNewtonState,
    v_cols: Matrix,
    g: &Vector,
    product: JacobianProduct,
) -> Result<SubspaceModel> {
    let f_norm = lin.f.norm();
    let cols: Vec<Vector> = v_cols
        .column_iter()
        .map(|c| {
            let c = c.into_owned();
            match product {
                JacobianProduct::Forward => lin.jvp(problem, &c),
                JacobianProduct::Transpose => lin.vjp(problem, &c),
            }
        })
        .collect();
    let jv_cols = Matrix::from_columns(&cols);
    let g_mat = symmetrized(v_cols.tr_mul(&v_cols));
    let c_vec = v_cols.tr_mul(g);
    let jtj = symmetrized(jv_cols.tr_mul(&jv_cols));
    let jtj_bound = generalized_max_eigenvalue(&jtj, &g_mat)?;
    let capped = qn.is_capped(jtj_bound, f_norm);
    let (q_mat, h_norm_ub) = match (capped, qn.cap()) {
        (true, Some(m)) => (&g_mat * m, m),
        _ => {
            let shift = qn.project_shift(&v_cols, &g_mat, f_norm);
            (
                symmetrized(jtj + shift),
                jtj_bound + qn.shift_norm_bound(f_norm),
            )
        }
    };
    Ok(SubspaceModel {
        h_quad: q_mat[(0, 0)],
        g_norm: g.norm(),
        v_cols,
        g_mat,
        c_vec,
        q_mat,
        jv_cols,
        jtj_bound,
        h_norm_ub,
        capped,
    })
}

fn symmetrized(m: Matrix) -> Matrix {
    (&m + m.transpose()) * 0.5
}

/// `max λ` with `A x = λ G x`, for symmetric `A` and PD `G`.
pub fn generalized_max_eigenvalue(a: &Matrix, g: &Matrix) -> Result<f64> {
    let chol = Cholesky::new(g.clone()).ok_or(Error::NotPositiveDefinite("G"))?;
    let l = chol.l();
    let l_inv_a = l
        .solve_lower_triangular(a)
        .ok_or(Error::NotPositiveDefinite("G"))?;
    let reduced = l
        .solve_lower_triangular(&l_inv_a.transpose())
        .ok_or(Error::NotPositiveDefinite("G"))?;
    let eig = SymEigen::new(&reduced);
    Ok(eig.eigenvalues.iter().copied().fold(0.0, f64::max))
}
