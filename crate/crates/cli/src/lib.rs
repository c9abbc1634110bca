//! Config-driven runner for the QNSTR solver and its first-order baselines.
//!
//! See [`config`] for the experiment file format and [`output`] for the
//! artifacts each run leaves behind.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{ExperimentConfig, Method, ProblemSpec};
pub use error::CliError;
pub use output::{read_summary, read_trace, Summary, TraceRow};
pub use run::{exit_code, run_experiment, sweep, RunOptions, RunOutcome, SweepAxis};
