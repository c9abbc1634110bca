//! The outer trust-region loop.
//!
//! Each iteration builds the subspace model at `z_k`, solves the reduced
//! subproblem, evaluates the trial point `z_k + V α`, and applies the
//! ratio test
//!
//! ```text
//! ρ = (r(z_k) - r(z_k + Vα)) / (m(0) - m(α))
//! ```
//!
//! to update the radius and decide acceptance. Accepted steps feed the
//! quasi-Newton update and the direction history.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problem::{Problem, Vector};
use crate::quasi_newton::{QuasiNewtonState, UpdateOutcome, DEFAULT_GUARD_EPS};
use crate::residual::{gradient_at, Gradient, StationarityCertificate};
use crate::smoothing::{SmoothResidual, Smoothing, SmoothingKind};
use crate::subspace::{
    assemble_model, collect_directions, rank_filter, DirectionHistory, JacobianProduct,
    SubspaceKind, SubspaceModel, RANK_TOL,
};
use crate::trs::{cauchy_decrease_bound, cauchy_point, solve_trs, SubproblemSolution};

/// Absolute slack allowed in the runtime Cauchy-decrease check.
pub const LEMMA_SLACK: f64 = 1e-10;

/// How the subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    #[default]
    Exact,
    Cauchy,
}

impl std::str::FromStr for StepMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Self::Exact),
            "cauchy" => Ok(Self::Cauchy),
            other => Err(format!(
                "unknown step mode `{other}` (expected exact|cauchy)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Maximum radius `Δ̄`.
    pub delta_bar: f64,
    pub delta0: f64,
    /// Shrink factor `β_1 < 1`.
    pub beta1: f64,
    /// Growth factor `β_2 > 1`.
    pub beta2: f64,
    /// Acceptance threshold `η`.
    pub eta: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    /// Curvature guard `ε̄` of the quasi-Newton update.
    pub guard_eps: f64,
    pub mu: f64,
    /// Stop when `‖F(z, µ)‖ ≤ eps_stop`.
    pub eps_stop: f64,
    pub max_iters: usize,
    pub subspace: SubspaceKind,
    /// Target subspace dimension `L`.
    pub subspace_dim: usize,
    pub smoothing: SmoothingKind,
    pub step: StepMode,
    /// Optional cap `M` on `‖H‖`.
    pub cap: Option<f64>,
    /// Build `JV` from transposed products `J^T d` instead of `J d`.
    pub paper_mode_vjp: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta_bar: 10.0,
            delta0: 1.0,
            beta1: 0.5,
            beta2: 2.0,
            eta: 0.01,
            zeta1: 0.02,
            zeta2: 0.05,
            guard_eps: DEFAULT_GUARD_EPS,
            mu: 1e-8,
            eps_stop: 1e-5,
            max_iters: 2000,
            subspace: SubspaceKind::Vz,
            subspace_dim: 4,
            smoothing: SmoothingKind::Uniform,
            step: StepMode::Exact,
            cap: None,
            paper_mode_vjp: false,
            seed: 0,
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

impl SolverConfig {
    /// Checks the trust-region input constraints
    /// `0 < Δ_0 < Δ̄`, `0 < β_1 < 1 < β_2`, `0 ≤ η < ζ_1 < ζ_2 ≤ 1`.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.delta_bar,
            self.delta0,
            self.beta1,
            self.beta2,
            self.eta,
            self.zeta1,
            self.zeta2,
            self.guard_eps,
            self.mu,
            self.eps_stop,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("config", "all parameters must be finite"));
        }
        if !(self.delta0 > 0.0 && self.delta0 < self.delta_bar) {
            return Err(invalid(
                "delta0",
                format!(
                    "requires 0 < delta0 < delta_bar, got delta0 = {}, delta_bar = {}",
                    self.delta0, self.delta_bar
                ),
            ));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 1.0) {
            return Err(invalid(
                "beta1/beta2",
                format!(
                    "requires 0 < beta1 < 1 < beta2, got beta1 = {}, beta2 = {}",
                    self.beta1, self.beta2
                ),
            ));
        }
        if !(0.0 <= self.eta
            && self.eta < self.zeta1
            && self.zeta1 < self.zeta2
            && self.zeta2 <= 1.0)
        {
            return Err(invalid(
                "eta/zeta1/zeta2",
                format!(
                    "requires 0 <= eta < zeta1 < zeta2 <= 1, got eta = {}, zeta1 = {}, zeta2 = {}",
                    self.eta, self.zeta1, self.zeta2
                ),
            ));
        }
        if !(self.guard_eps > 0.0) {
            return Err(invalid("guard_eps", "must be positive"));
        }
        if !(self.mu > 0.0) {
            return Err(invalid("mu", "must be positive"));
        }
        if !(self.eps_stop > 0.0) {
            return Err(invalid("eps_stop", "must be positive"));
        }
        if self.subspace_dim == 0 {
            return Err(invalid("subspace_dim", "must be at least 1"));
        }
        if let Some(m) = self.cap {
            if !(m > 0.0 && m.is_finite()) {
                return Err(invalid("cap", "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Radius after a step with ratio `rho`.
    pub fn next_radius(&self, delta: f64, rho: f64, on_boundary: bool) -> f64 {
        if rho < self.zeta1 {
            self.beta1 * delta
        } else if rho >= self.zeta2 && on_boundary {
            (self.beta2 * delta).min(self.delta_bar)
        } else {
            delta
        }
    }

    fn jacobian_product(&self) -> JacobianProduct {
        if self.paper_mode_vjp {
            JacobianProduct::Transpose
        } else {
            JacobianProduct::Forward
        }
    }
}

/// One iteration of the outer loop. Norms refer to the iterate `z_k` the
/// step was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f_norm: f64,
    pub fn_norm: f64,
    pub g_norm: f64,
    pub r_value: f64,
    pub delta: f64,
    pub rho: f64,
    pub accepted: bool,
    pub on_boundary: bool,
    pub guard_passed: bool,
    pub model_decrease: f64,
    /// `½‖g‖ min(Δ, ‖g‖/‖H‖_ub)`.
    pub cauchy_bound: f64,
    pub h_norm_ub: f64,
    pub step_norm: f64,
    pub subspace_dim: usize,
    /// Milliseconds since the solver was created.
    pub wall_ms: f64,
}

impl IterationRecord {
    /// Equality ignoring the wall-clock field.
    pub fn same_numerics(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_ms = other.wall_ms;
        a == *other
    }

    pub fn lemma_holds(&self) -> bool {
        self.model_decrease >= self.cauchy_bound - LEMMA_SLACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `‖F(z_k, µ)‖ ≤ ε`.
    Converged,
    /// `‖g_k‖` vanished before the residual did.
    GradientVanished,
    MaxIterations,
    /// The radius fell below the floating-point resolution of `z`.
    Stagnated,
}

/// Counters for the runtime invariants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub lemma_violations: usize,
    pub secant_violations: usize,
    pub pd_violations: usize,
    pub guard_passes: usize,
    pub guard_failures: usize,
    pub qn_resets: usize,
    pub qn_rollbacks: usize,
    pub regularized_subproblems: usize,
    pub rejected_steps: usize,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub k: usize,
    pub z: Vector,
    pub delta: f64,
    pub qn: QuasiNewtonState,
    pub history: DirectionHistory,
    pub diagnostics: Diagnostics,
    pub seed: u64,
    pub stop: Option<StopReason>,
}

pub const CHECKPOINT_VERSION: &str = "qnstr-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub config_hash: String,
    pub config: SolverConfig,
    pub dim: usize,
    pub state: SolverState,
}

/// Writes the checkpoint as JSON, through a temporary file and a rename.
pub fn checkpoint_save(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::Checkpoint("empty checkpoint path".into()));
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(checkpoint)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint and checks its version and that it was written for
/// `config`.
pub fn checkpoint_load(path: &Path, config: &SolverConfig) -> Result<Checkpoint> {
    if path.as_os_str().is_empty() {
        return Err(Error::Checkpoint("empty checkpoint path".into()));
    }
    let checkpoint: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version `{}` (expected `{CHECKPOINT_VERSION}`)",
            checkpoint.version
        )));
    }
    if checkpoint.config_hash != checkpoint.config.hash() {
        return Err(Error::Checkpoint(
            "stored config does not match its hash".into(),
        ));
    }
    if checkpoint.config_hash != config.hash() {
        return Err(Error::Checkpoint(
            "config hash mismatch: checkpoint was written by a different configuration".into(),
        ));
    }
    if checkpoint.state.z.len() != checkpoint.dim || checkpoint.state.qn.dim() != checkpoint.dim {
        return Err(Error::Checkpoint("inconsistent dimensions".into()));
    }
    Ok(checkpoint)
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub z: Vector,
    pub trace: Vec<IterationRecord>,
    pub stop: StopReason,
    pub iterations: usize,
    pub f_norm: f64,
    pub fn_norm: f64,
    pub g_norm: f64,
    pub diagnostics: Diagnostics,
    pub certificate: StationarityCertificate,
}

struct Point {
    lin: SmoothResidual,
    grad: Gradient,
}

/// The solver as a resumable state machine over a borrowed problem.
pub struct QnstrSolver<'p, P: ?Sized> {
    problem: &'p P,
    config: SolverConfig,
    smoothing: Smoothing,
    state: SolverState,
    current: Point,
    model: Option<SubspaceModel>,
    started: Instant,
}

fn check_finite(v: &Vector, what: &'static str, iteration: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what, iteration })
    }
}

impl<'p, P: Problem + ?Sized> QnstrSolver<'p, P> {
    pub fn new(problem: &'p P, config: SolverConfig, z0: Vector) -> Result<Self> {
        config.validate()?;
        if z0.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                what: "z0",
                expected: problem.dim(),
                got: z0.len(),
            });
        }
        check_finite(&z0, "z0", 0)?;
        let smoothing = Smoothing::new(config.smoothing, config.mu, problem.bounds())?;
        let current = Self::evaluate(problem, &smoothing, &z0, 0)?;
        let mut history = DirectionHistory::new(config.subspace_dim);
        history.enter_point(&current.lin.f);
        let state = SolverState {
            k: 0,
            qn: QuasiNewtonState::new(
                problem.dim(),
                current.grad.f_norm,
                config.guard_eps,
                config.cap,
            ),
            delta: config.delta0,
            z: z0,
            history,
            diagnostics: Diagnostics::default(),
            seed: config.seed,
            stop: None,
        };
        Ok(Self {
            problem,
            config,
            smoothing,
            state,
            current,
            model: None,
            started: Instant::now(),
        })
    }

    /// Continues from a checkpoint written for the same configuration.
    pub fn resume(problem: &'p P, checkpoint: Checkpoint) -> Result<Self> {
        let config = checkpoint.config;
        config.validate()?;
        if checkpoint.dim != problem.dim() {
            return Err(Error::Checkpoint(format!(
                "checkpoint dimension {} does not match problem dimension {}",
                checkpoint.dim,
                problem.dim()
            )));
        }
        let smoothing = Smoothing::new(config.smoothing, config.mu, problem.bounds())?;
        let current = Self::evaluate(problem, &smoothing, &checkpoint.state.z, checkpoint.state.k)?;
        Ok(Self {
            problem,
            config,
            smoothing,
            state: checkpoint.state,
            current,
            model: None,
            started: Instant::now(),
        })
    }

    fn evaluate(problem: &P, smoothing: &Smoothing, z: &Vector, k: usize) -> Result<Point> {
        let lin = smoothing.linearize(problem, z);
        check_finite(&lin.f, "F(z, mu)", k)?;
        let grad = gradient_at(problem, &lin);
        check_finite(&grad.g, "gradient", k)?;
        Ok(Point { lin, grad })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn z(&self) -> &Vector {
        &self.state.z
    }

    pub fn gradient(&self) -> &Gradient {
        &self.current.grad
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.state.stop
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            config_hash: self.config.hash(),
            config: self.config.clone(),
            dim: self.problem.dim(),
            state: self.state.clone(),
        }
    }

    fn stop_check(&self) -> Option<StopReason> {
        let grad = &self.current.grad;
        if grad.f_norm <= self.config.eps_stop {
            Some(StopReason::Converged)
        } else if grad.g.norm() <= 1e-15 * (1.0 + grad.r_value) {
            Some(StopReason::GradientVanished)
        } else if self.state.k >= self.config.max_iters {
            Some(StopReason::MaxIterations)
        } else if self.state.delta <= f64::EPSILON * (1.0 + self.state.z.amax()) {
            Some(StopReason::Stagnated)
        } else {
            None
        }
    }

    fn build_model(&self) -> Result<SubspaceModel> {
        let g = &self.current.grad.g;
        let raw = collect_directions(self.config.subspace, &self.state.history, g);
        let v = rank_filter(&raw, RANK_TOL)?;
        assemble_model(
            self.problem,
            &self.current.lin,
            &self.state.qn,
            v,
            g,
            self.config.jacobian_product(),
        )
    }

    fn solve_subproblem(&self, model: &SubspaceModel) -> Result<SubproblemSolution> {
        let k = self.state.k;
        let delta = self.state.delta;
        let wrap = |e: Error| Error::Subproblem {
            iteration: k,
            reason: e.to_string(),
        };
        match self.config.step {
            StepMode::Exact => {
                solve_trs(&model.q_mat, &model.g_mat, &model.c_vec, delta).map_err(wrap)
            }
            StepMode::Cauchy => cauchy_point(
                &model.q_mat,
                &model.g_mat,
                &model.c_vec,
                model.g_norm,
                model.h_quad,
                delta,
            )
            .map_err(wrap),
        }
    }

    /// Runs one iteration. Returns `None` once a stopping rule has fired.
    pub fn step(&mut self) -> Result<Option<IterationRecord>> {
        if self.state.stop.is_some() {
            return Ok(None);
        }
        if let Some(reason) = self.stop_check() {
            self.state.stop = Some(reason);
            return Ok(None);
        }
        let k = self.state.k;
        let model = match self.model.take() {
            Some(model) => model,
            None => self.build_model()?,
        };
        if model.q_mat.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "reduced model",
                iteration: k,
            });
        }
        let sol = self.solve_subproblem(&model)?;
        if sol.regularized {
            self.state.diagnostics.regularized_subproblems += 1;
        }
        let delta = self.state.delta;
        let step = &model.v_cols * &sol.alpha;
        let trial_z = &self.state.z + &step;
        check_finite(&trial_z, "trial point", k)?;
        let trial_lin = self.smoothing.linearize(self.problem, &trial_z);
        check_finite(&trial_lin.f, "F(z, mu)", k)?;

        let grad = &self.current.grad;
        let f_trial_norm = trial_lin.f.norm();
        let r_trial = 0.5 * f_trial_norm * f_trial_norm;
        let rho = if sol.model_decrease > 0.0 {
            (grad.r_value - r_trial) / sol.model_decrease
        } else {
            f64::NEG_INFINITY
        };
        let cauchy_bound = cauchy_decrease_bound(model.g_norm, delta, model.h_norm_ub);
        let on_boundary = sol.step_norm >= (1.0 - 1e-8) * delta;

        self.state.delta = self.config.next_radius(delta, rho, on_boundary);
        let accepted = rho > self.config.eta;

        let record = IterationRecord {
            k,
            f_norm: grad.f_norm,
            fn_norm: grad.fn_norm,
            g_norm: model.g_norm,
            r_value: grad.r_value,
            delta,
            rho,
            accepted,
            on_boundary,
            guard_passed: self.state.qn.last_guard_passed(),
            model_decrease: sol.model_decrease,
            cauchy_bound,
            h_norm_ub: model.h_norm_ub,
            step_norm: step.norm(),
            subspace_dim: model.v_cols.ncols(),
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        if !record.lemma_holds() {
            self.state.diagnostics.lemma_violations += 1;
            log::warn!(
                "iteration {k}: model decrease {} below Cauchy bound {}",
                sol.model_decrease,
                cauchy_bound
            );
        }

        if accepted {
            let trial_grad = gradient_at(self.problem, &trial_lin);
            check_finite(&trial_grad.g, "gradient", k)?;
            let s = &trial_z - &self.state.z;
            // v = (J_+ - J)^T F_+ · ‖F_+‖ / ‖F‖
            let old_jt_f = self.current.lin.vjp(self.problem, &trial_lin.f);
            let v = (&trial_grad.g - old_jt_f) * (f_trial_norm / grad.f_norm);
            self.record_update(&s, &v, f_trial_norm, k)?;
            let g_old = self.current.grad.g.clone();
            self.state.history.accept_step(&s, &g_old);
            self.state.history.enter_point(&trial_lin.f);
            self.state.z = trial_z;
            self.current = Point {
                lin: trial_lin,
                grad: trial_grad,
            };
        } else {
            self.state.diagnostics.rejected_steps += 1;
            self.model = Some(model);
        }
        self.state.k += 1;
        Ok(Some(record))
    }

    fn record_update(&mut self, s: &Vector, v: &Vector, f_norm: f64, k: usize) -> Result<()> {
        if s.norm_squared() == 0.0 {
            // The step underflowed against z; nothing to learn from.
            return Ok(());
        }
        check_finite(v, "secant vector", k)?;
        let diag = &mut self.state.diagnostics;
        match self.state.qn.update(s, v, f_norm)? {
            UpdateOutcome::Updated { secant_residual } => {
                diag.guard_passes += 1;
                if secant_residual > 1e-8 * (1.0 + v.norm()) {
                    diag.secant_violations += 1;
                    log::warn!("iteration {k}: secant residual {secant_residual}");
                }
                if !self.state.qn.is_positive_definite() {
                    diag.pd_violations += 1;
                    log::warn!("iteration {k}: quasi-Newton matrix failed Cholesky");
                }
            }
            UpdateOutcome::GuardFailed => diag.guard_failures += 1,
            UpdateOutcome::Reset => diag.qn_resets += 1,
            UpdateOutcome::RolledBack => diag.qn_rollbacks += 1,
        }
        Ok(())
    }

    /// Iterates until a stopping rule fires, handing each record to
    /// `observer` as it is produced.
    pub fn run<F>(&mut self, mut observer: F) -> Result<SolveReport>
    where
        F: FnMut(&IterationRecord, &Self) -> Result<()>,
    {
        let mut trace = Vec::new();
        while let Some(record) = self.step()? {
            observer(&record, self)?;
            trace.push(record);
        }
        Ok(self.report(trace))
    }

    fn report(&self, trace: Vec<IterationRecord>) -> SolveReport {
        let grad = &self.current.grad;
        SolveReport {
            z: self.state.z.clone(),
            stop: self.state.stop.unwrap_or(StopReason::MaxIterations),
            iterations: self.state.k,
            f_norm: grad.f_norm,
            fn_norm: grad.fn_norm,
            g_norm: grad.g.norm(),
            diagnostics: self.state.diagnostics.clone(),
            certificate: StationarityCertificate::new(
                &self.smoothing,
                self.problem.dim(),
                self.config.eps_stop,
                grad.f_norm,
                grad.fn_norm,
            ),
            trace,
        }
    }
}

/// Runs the solver from `z0` to completion.
pub fn qnstr_solve<P: Problem + ?Sized>(
    problem: &P,
    config: &SolverConfig,
    z0: Vector,
) -> Result<SolveReport> {
    QnstrSolver::new(problem, config.clone(), z0)?.run(|_, _| Ok(()))
}
