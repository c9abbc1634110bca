use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qnstr_cli::{
    exit_code, run_experiment, sweep, CliError, ExperimentConfig, Method, RunOptions, SweepAxis,
};
use qnstr_core::StepMode;

#[derive(Parser)]
#[command(
    name = "qnstr",
    version,
    about = "Quasi-Newton subspace trust-region min-max solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for independent runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory, overriding the config file and $QNSTR_OUTPUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Subproblem solver.
    #[arg(long, global = true)]
    step: Option<StepMode>,
    /// Comma-separated methods to run side by side (qnstr, gda, alt_adam).
    #[arg(long, global = true, value_delimiter = ',')]
    compare: Option<Vec<Method>>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file.
    Run {
        config: PathBuf,
        /// Continue a qnstr run from a checkpoint written by this config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run an experiment once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// L, subspace, smoothing or seed.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let mut opts = RunOptions {
        out: cli.out,
        step: cli.step,
        compare: cli.compare,
        resume: None,
        jobs: cli.jobs,
    };
    match cli.command {
        Command::Run { config, resume } => {
            let experiment = ExperimentConfig::load(&config)?;
            opts.resume = resume;
            let outcomes = run_experiment(&experiment, &opts)?;
            for o in &outcomes {
                println!(
                    "{}\t{}\t{:?}\t{}",
                    o.method.name(),
                    o.repeat,
                    o.stop,
                    o.dir.display()
                );
            }
            Ok(exit_code(&outcomes))
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let experiment = ExperimentConfig::load(&config)?;
            let results = sweep(&experiment, axis, &values, &opts)?;
            let all: Vec<_> = results
                .into_iter()
                .flat_map(|(v, outs)| outs.into_iter().map(move |o| (v.clone(), o)))
                .collect();
            for (value, o) in &all {
                println!(
                    "{}={value}\t{}\t{:?}\t{}",
                    axis.name(),
                    o.method.name(),
                    o.stop,
                    o.dir.display()
                );
            }
            let outcomes: Vec<_> = all.into_iter().map(|(_, o)| o).collect();
            Ok(exit_code(&outcomes))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("qnstr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
