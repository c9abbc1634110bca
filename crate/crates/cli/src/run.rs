//! Running experiments, comparisons and sweeps.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use qnstr_core::driver::StopReason;
use qnstr_core::{
    checkpoint_load, checkpoint_save, eval_r_and_grad, run_baseline, IterationRecord, QnstrSolver,
    Smoothing, SmoothingKind, StationarityCertificate, StepMode, SubspaceKind,
};

use crate::config::{ExperimentConfig, Method};
use crate::error::{CliError, EXIT_NOT_CONVERGED};
use crate::output::{write_long_csv, write_summary, Summary, TraceWriter};

/// Command-line overrides applied on top of an experiment file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub step: Option<StepMode>,
    pub compare: Option<Vec<Method>>,
    pub resume: Option<PathBuf>,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
}

impl RunOptions {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(step) = self.step {
            config.solver.step = step;
        }
        if let Some(methods) = &self.compare {
            config.methods = methods.clone();
        }
    }
}

/// What one method/repeat produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub method: Method,
    pub repeat: usize,
    pub dir: PathBuf,
    pub converged: bool,
    pub stop: StopReason,
    pub trace: Vec<IterationRecord>,
}

fn stop_name(stop: StopReason) -> &'static str {
    match stop {
        StopReason::Converged => "converged",
        StopReason::GradientVanished => "gradient_vanished",
        StopReason::MaxIterations => "max_iterations",
        StopReason::Stagnated => "stagnated",
    }
}

/// 0 when every run converged, 4 otherwise.
pub fn exit_code(outcomes: &[RunOutcome]) -> i32 {
    if outcomes.iter().all(|o| o.converged) {
        0
    } else {
        EXIT_NOT_CONVERGED
    }
}

fn run_dir(config: &ExperimentConfig, base: &Path, method: Method, rep: usize) -> PathBuf {
    let dir = base.join(method.name());
    if config.repeat > 1 {
        dir.join(format!("rep_{rep}"))
    } else {
        dir
    }
}

fn monotone(trace: &[IterationRecord]) -> bool {
    trace.windows(2).all(|w| w[1].r_value <= w[0].r_value)
}

/// Runs one method on repeat `rep`, writing its artifacts under `dir`.
pub fn run_single(
    config: &ExperimentConfig,
    method: Method,
    rep: usize,
    dir: &Path,
    resume: Option<&Path>,
) -> Result<RunOutcome, CliError> {
    std::fs::create_dir_all(dir)?;
    let inst = config.instance(rep)?;
    let problem = inst.problem.as_ref();
    let wall = config.record_wall_time;
    let trace_path = dir.join("trace.csv");
    let smoothing = Smoothing::new(config.solver.smoothing, config.solver.mu, problem.bounds())?;
    let (_, initial) = eval_r_and_grad(problem, &inst.z0, &smoothing);
    let started = std::time::Instant::now();

    let io = |e: CliError| qnstr_core::Error::Io(std::io::Error::other(e.to_string()));
    let (trace, stop, iterations, f_norm, fn_norm, diagnostics, hash) = match method {
        Method::Qnstr => {
            let mut solver = match resume {
                Some(path) => {
                    let ck = checkpoint_load(path, &config.solver)?;
                    QnstrSolver::resume(problem, ck)?
                }
                None => QnstrSolver::new(problem, config.solver.clone(), inst.z0.clone())?,
            };
            let mut writer = match resume {
                Some(_) => TraceWriter::resume(&trace_path, wall, solver.state().k)?,
                None => TraceWriter::create(&trace_path, wall)?,
            };
            let ck_dir = dir.join("checkpoints");
            let every = config.checkpoint_every;
            if every > 0 {
                std::fs::create_dir_all(&ck_dir)?;
            }
            let report = solver.run(|rec, s| {
                writer.write(rec).map_err(io)?;
                let k = s.state().k;
                if every > 0 && k % every == 0 {
                    checkpoint_save(&s.checkpoint(), &ck_dir.join(format!("ck_{k:06}.json")))?;
                }
                Ok(())
            })?;
            (
                report.trace,
                report.stop,
                report.iterations,
                report.f_norm,
                report.fn_norm,
                Some(report.diagnostics),
                Some(config.solver.hash()),
            )
        }
        Method::Gda | Method::AltAdam => {
            if resume.is_some() {
                return Err(CliError::Config(
                    "--resume applies to qnstr runs only".into(),
                ));
            }
            let mut writer = TraceWriter::create(&trace_path, wall)?;
            let baseline = config.baseline_config(method);
            let report = run_baseline(problem, &baseline, inst.z0.clone(), |rec| {
                writer.write(rec).map_err(io)
            })?;
            (
                report.trace,
                report.stop,
                report.iterations,
                report.f_norm,
                report.fn_norm,
                None,
                None,
            )
        }
    };

    let converged = stop == StopReason::Converged;
    let summary = Summary {
        name: config.name.clone(),
        method: method.name().into(),
        problem: inst.kind.into(),
        n: problem.dim_x(),
        m: problem.dim_y(),
        seed: config.seed + rep as u64,
        repeat_index: rep,
        stop_reason: stop_name(stop).into(),
        converged,
        iterations,
        initial_f_norm: initial.f_norm,
        initial_fn_norm: initial.fn_norm,
        final_f_norm: f_norm,
        final_fn_norm: fn_norm,
        monotone_r: monotone(&trace),
        certificate: StationarityCertificate::new(
            &smoothing,
            problem.dim(),
            config.solver.eps_stop,
            f_norm,
            fn_norm,
        ),
        diagnostics,
        solver_config_hash: hash,
        wall_ms: wall.then(|| started.elapsed().as_secs_f64() * 1e3),
        config: config.clone(),
    };
    write_summary(&dir.join("summary.json"), &summary)?;
    log::info!(
        "{} rep {rep}: {} after {iterations} iterations, ||F_N|| = {fn_norm:e}",
        method.name(),
        stop_name(stop)
    );
    Ok(RunOutcome {
        method,
        repeat: rep,
        dir: dir.to_path_buf(),
        converged,
        stop,
        trace,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))
}

/// Runs every method and repeat of `config` into `base`.
fn run_all(
    config: &ExperimentConfig,
    base: &Path,
    opts: &RunOptions,
) -> Result<Vec<RunOutcome>, CliError> {
    let tasks: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| (0..config.repeat).map(move |r| (m, r)))
        .collect();
    if opts.resume.is_some() {
        let qnstr_runs = tasks.iter().filter(|(m, _)| *m == Method::Qnstr).count();
        if qnstr_runs != 1 || tasks.len() != 1 {
            return Err(CliError::Config(
                "--resume needs exactly one qnstr run (methods = [\"qnstr\"], repeat = 1)".into(),
            ));
        }
    }
    pool(opts.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(method, rep)| {
                let dir = run_dir(config, base, method, rep);
                run_single(config, method, rep, &dir, opts.resume.as_deref())
            })
            .collect()
    })
}

/// `run <config>`.
pub fn run_experiment(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<Vec<RunOutcome>, CliError> {
    let mut config = config.clone();
    opts.apply(&mut config);
    config.validate()?;
    let base = match &opts.out {
        Some(out) => out.clone(),
        None => config.resolved_output_dir(),
    };
    std::fs::create_dir_all(&base)?;
    run_all(&config, &base, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    L,
    Subspace,
    Smoothing,
    Seed,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::L => "L",
            Self::Subspace => "subspace",
            Self::Smoothing => "smoothing",
            Self::Seed => "seed",
        }
    }

    /// Copy of `config` with this axis set to `value`.
    pub fn apply(
        self,
        config: &ExperimentConfig,
        value: &str,
    ) -> Result<ExperimentConfig, CliError> {
        let bad = |e: String| {
            CliError::Config(format!(
                "sweep value `{value}` for axis {}: {e}",
                self.name()
            ))
        };
        let mut c = config.clone();
        match self {
            Self::L => c.solver.subspace_dim = value.parse().map_err(|e| bad(format!("{e}")))?,
            Self::Subspace => c.solver.subspace = value.parse::<SubspaceKind>().map_err(bad)?,
            Self::Smoothing => c.solver.smoothing = value.parse::<SmoothingKind>().map_err(bad)?,
            Self::Seed => {
                let seed: u64 = value.parse().map_err(|e| bad(format!("{e}")))?;
                c.seed = seed;
                c.solver.seed = seed;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "L" | "l" | "subspace_dim" => Ok(Self::L),
            "subspace" => Ok(Self::Subspace),
            "smoothing" => Ok(Self::Smoothing),
            "seed" => Ok(Self::Seed),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected L|subspace|smoothing|seed)"
            )),
        }
    }
}

/// `sweep <config> --axis A --values v1,v2,…`: one run set per value under
/// `<out>/<axis>_<value>/`, plus `<out>/sweep.csv` in long format.
pub fn sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    opts: &RunOptions,
) -> Result<Vec<(String, Vec<RunOutcome>)>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    if opts.resume.is_some() {
        return Err(CliError::Config(
            "--resume is not supported for sweeps".into(),
        ));
    }
    let mut base_config = config.clone();
    opts.apply(&mut base_config);
    let points = values
        .iter()
        .map(|v| axis.apply(&base_config, v).map(|c| (v.clone(), c)))
        .collect::<Result<Vec<_>, _>>()?;
    let base = match &opts.out {
        Some(out) => out.clone(),
        None => base_config.resolved_output_dir(),
    };
    std::fs::create_dir_all(&base)?;
    let inner = RunOptions {
        jobs: 1,
        ..RunOptions::default()
    };
    let results: Vec<(String, Vec<RunOutcome>)> = pool(opts.jobs)?.install(|| {
        points
            .par_iter()
            .map(|(value, c)| {
                let dir = base.join(format!("{}_{value}", axis.name()));
                std::fs::create_dir_all(&dir)?;
                let outcomes = c
                    .methods
                    .iter()
                    .flat_map(|&m| (0..c.repeat).map(move |r| (m, r)))
                    .map(|(m, r)| {
                        run_single(c, m, r, &run_dir(c, &dir, m, r), inner.resume.as_deref())
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((value.clone(), outcomes))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let long: Vec<(String, String, Vec<IterationRecord>)> = results
        .iter()
        .flat_map(|(value, outs)| {
            outs.iter()
                .map(move |o| (value.clone(), o.method.name().to_string(), o.trace.clone()))
        })
        .collect();
    write_long_csv(
        &base.join("sweep.csv"),
        axis.name(),
        &long,
        config.record_wall_time,
    )?;
    Ok(results)
}
