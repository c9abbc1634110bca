//! Quasi-Newton subspace trust-region solver for box-constrained min-max
//! problems.
//!
//! A saddle point of `f(x, y)` on a box is a zero of the projection residual
//! `F_N(z) = z - mid(l, u, z - H(z))`, where `H = (∇_x f, -∇_y f)`. The
//! solver minimizes `½‖F(z, µ)‖²` for a smoothed residual `F` with a
//! trust-region method restricted to a small subspace per iteration.
//!
//! ```
//! use qnstr_core::{qnstr_solve, BilinearGame, BoxBounds, Matrix, SolverConfig, Vector};
//!
//! let game = BilinearGame::new(
//!     Matrix::identity(2, 2),
//!     Vector::zeros(2),
//!     Vector::zeros(2),
//!     BoxBounds::uniform(4, -1.0, 1.0).unwrap(),
//! )
//! .unwrap();
//! let report = qnstr_solve(&game, &SolverConfig::default(), Vector::from_element(4, 0.5)).unwrap();
//! assert!(report.fn_norm <= 1e-5);
//! ```

pub mod activation;
pub mod baselines;
pub mod driver;
pub mod error;
pub mod linalg;
pub mod problem;
pub mod quasi_newton;
pub mod residual;
pub mod smoothing;
pub mod subspace;
pub mod tiny_gan;
pub mod trs;

pub use baselines::{run_baseline, AdamState, AltAdam, Baseline, BaselineConfig, BaselineReport};
pub use driver::{
    checkpoint_load, checkpoint_save, qnstr_solve, Checkpoint, Diagnostics, IterationRecord,
    QnstrSolver, SolveReport, SolverConfig, SolverState, StepMode, StopReason,
};
pub use error::{Error, Result};
pub use problem::{BilinearGame, BoxBounds, Matrix, Problem, SaaLoss, SaaProblem, Vector};
pub use quasi_newton::QuasiNewtonState;
pub use residual::{eval_r_and_grad, Gradient, StationarityCertificate};
pub use smoothing::{kappa, SmoothResidual, Smoothing, SmoothingKind};
pub use subspace::{DirectionHistory, JacobianProduct, SubspaceKind, SubspaceModel};
pub use tiny_gan::{TinyGan, TinyGanSpec};
pub use trs::{cauchy_point, solve_trs, SubproblemSolution};
