use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] qnstr_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for everything that fails mid-run.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Exit code when every run finished but at least one did not converge.
pub const EXIT_NOT_CONVERGED: i32 = 4;
