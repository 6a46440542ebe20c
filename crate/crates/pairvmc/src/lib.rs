//! File formats, run orchestration and checks for the `pairvmc` command.
//!
//! The numerical engine lives in `pairvmc_core`; this crate adds what needs
//! `std`: TOML configuration with presets, checkpoint files, training and
//! evaluation runs in an output directory, the property/oracle check suites
//! and the antisymmetrization benchmark.

pub mod bench;
pub mod checkpoint;
pub mod checks;
pub mod config;
pub mod error;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;

/// Name of the environment variable that sets the worker-thread count.
pub const THREADS_ENV: &str = "PAIRVMC_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "{THREADS_ENV} must be a positive integer, got '{v}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}
