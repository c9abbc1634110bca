//! Experiment files.
//!
//! An experiment is a TOML document:
//!
//! ```toml
//! name = "bilinear"
//! seed = 0
//! output_dir = "runs/bilinear"
//! methods = ["qnstr", "alt_adam"]
//!
//! [problem]
//! kind = "bilinear"
//! coupling = [[1.0, 0.0], [0.0, 1.0]]
//!
//! [solver]
//! subspace = "vz"
//! subspace_dim = 4
//! ```
//!
//! Every table is optional except `[problem]`; omitted keys take their
//! defaults and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qnstr_core::baselines::warm_start_adam;
use qnstr_core::{
    Baseline, BaselineConfig, BilinearGame, BoxBounds, Matrix, Problem, SolverConfig, TinyGan,
    TinyGanSpec, Vector,
};

use crate::error::CliError;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "QNSTR_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Qnstr,
    Gda,
    AltAdam,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Qnstr => "qnstr",
            Self::Gda => "gda",
            Self::AltAdam => "alt_adam",
        }
    }

    pub fn baseline(self) -> Option<Baseline> {
        match self {
            Self::Qnstr => None,
            Self::Gda => Some(Baseline::Gda),
            Self::AltAdam => Some(Baseline::AltAdam),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "qnstr" => Ok(Self::Qnstr),
            "gda" => Ok(Self::Gda),
            "alt_adam" | "adam" => Ok(Self::AltAdam),
            other => Err(format!(
                "unknown method `{other}` (expected qnstr|gda|alt_adam)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilinearSpec {
    /// `B` as rows; `n × m`.
    pub coupling: Vec<Vec<f64>>,
    #[serde(default)]
    pub shift_x: Option<Vec<f64>>,
    #[serde(default)]
    pub shift_y: Option<Vec<f64>>,
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    /// Starting point; defaults to `z0_fill` in every coordinate.
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
    #[serde(default = "default_fill")]
    pub z0_fill: f64,
}

fn default_lower() -> f64 {
    -1.0
}

fn default_upper() -> f64 {
    1.0
}

fn default_fill() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Bilinear(BilinearSpec),
    TinyGan(TinyGanSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStart {
    pub steps: usize,
    pub lr: f64,
}

impl Default for WarmStart {
    fn default() -> Self {
        Self { steps: 0, lr: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub lr: f64,
    /// Defaults to the solver's `max_iters`.
    pub max_iters: Option<usize>,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Seed for problem data and initialization; repeat `r` uses `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeat")]
    pub repeat: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Fill the `wall_ms` trace column. Off by default so traces are
    /// byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Write a solver checkpoint every this many iterations; 0 disables.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub warm_start: WarmStart,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub baseline: BaselineSpec,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_repeat() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_methods() -> Vec<Method> {
    vec![Method::Qnstr]
}

/// A concrete problem instance with its starting point.
pub struct Instance {
    pub problem: Box<dyn Problem>,
    pub z0: Vector,
    pub kind: &'static str,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: qnstr_core::Error| CliError::Config(e.to_string());
        self.solver.validate().map_err(cfg)?;
        self.baseline_config(Method::AltAdam)
            .validate()
            .map_err(cfg)?;
        if self.repeat == 0 {
            return Err(CliError::Config("repeat must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must not be empty".into()));
        }
        if !(self.warm_start.lr >= 0.0 && self.warm_start.lr.is_finite()) {
            return Err(CliError::Config(
                "warm_start.lr must be finite and non-negative".into(),
            ));
        }
        // Building the problem checks dimensions and bounds.
        self.build(0)?;
        Ok(())
    }

    /// Honors [`OUTPUT_DIR_ENV`] over the file's `output_dir`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }

    pub fn baseline_config(&self, method: Method) -> BaselineConfig {
        BaselineConfig {
            method: method.baseline().unwrap_or_default(),
            lr: self.baseline.lr,
            max_iters: self.baseline.max_iters.unwrap_or(self.solver.max_iters),
            eps_stop: self.solver.eps_stop,
            mu: self.solver.mu,
            smoothing: self.solver.smoothing,
        }
    }

    /// Builds the problem and starting point for repeat `rep`, including
    /// the warm start.
    pub fn instance(&self, rep: usize) -> Result<Instance, CliError> {
        let mut inst = self.build(rep)?;
        if self.warm_start.steps > 0 {
            inst.z0 = warm_start_adam(
                inst.problem.as_ref(),
                &inst.z0,
                self.warm_start.steps,
                self.warm_start.lr,
            );
        }
        Ok(inst)
    }

    fn build(&self, rep: usize) -> Result<Instance, CliError> {
        let seed = self.seed + rep as u64;
        let cfg = |e: qnstr_core::Error| CliError::Config(format!("problem: {e}"));
        let (problem, z0, kind): (Box<dyn Problem>, Vector, &'static str) = match &self.problem {
            ProblemSpec::Bilinear(spec) => {
                let n = spec.coupling.len();
                let m = spec.coupling.first().map_or(0, Vec::len);
                if n == 0 || m == 0 || spec.coupling.iter().any(|row| row.len() != m) {
                    return Err(CliError::Config(
                        "problem.coupling must be a non-empty rectangular matrix".into(),
                    ));
                }
                let coupling = Matrix::from_fn(n, m, |i, j| spec.coupling[i][j]);
                let shift_x =
                    Vector::from_vec(spec.shift_x.clone().unwrap_or_else(|| vec![0.0; n]));
                let shift_y =
                    Vector::from_vec(spec.shift_y.clone().unwrap_or_else(|| vec![0.0; m]));
                let bounds = BoxBounds::uniform(n + m, spec.lower, spec.upper).map_err(cfg)?;
                let game = BilinearGame::new(coupling, shift_x, shift_y, bounds).map_err(cfg)?;
                let z0 = match &spec.z0 {
                    Some(z) if z.len() != n + m => {
                        return Err(CliError::Config(format!(
                            "problem.z0 has length {}, expected {}",
                            z.len(),
                            n + m
                        )))
                    }
                    Some(z) => Vector::from_vec(z.clone()),
                    None => Vector::from_element(n + m, spec.z0_fill),
                };
                (Box::new(game), z0, "bilinear")
            }
            ProblemSpec::TinyGan(spec) => {
                let gan = TinyGan::synthetic(spec.clone(), seed).map_err(cfg)?;
                let z0 = gan.initial_point(seed);
                (Box::new(gan.into_problem().map_err(cfg)?), z0, "tiny_gan")
            }
        };
        Ok(Instance { problem, z0, kind })
    }
}
