//! Batch driver for the `cusp-spectra` command line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{execute, Report};
pub use config::{Command, Overrides, RunConfig};
pub use error::CliError;

/// Size the global rayon pool from `CUSP_SPECTRA_THREADS`, if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CUSP_SPECTRA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("CUSP_SPECTRA_THREADS = {v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Io(e.into()))
}
