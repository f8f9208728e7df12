//! Command-line front end: shape generation, training, prediction, reference
//! solvers, evaluation and timing.

pub mod commands;
pub mod config;
pub mod error;
pub mod field;

pub use commands::{run, Cli, Command};
pub use config::{FrozenConfig, RunConfig};
pub use error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "SCATTER_THREADS";

/// Sizes the global thread pool from `SCATTER_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}
