//! File formats, training and evaluation runs, and the `oasis-lab` command
//! line built on `oasis-core`.

pub mod checkpoint;
pub mod cli;
pub mod container;
pub mod dataset;
pub mod error;
pub mod image_io;
pub mod manifest;
pub mod run;

pub use error::{LabError, Result};

/// Environment variable holding the worker thread count (default 1).
pub const THREADS_ENV: &str = "OASIS_LAB_THREADS";

/// Sizes the global rayon pool from `OASIS_LAB_THREADS`. Later calls are no-ops.
pub fn init_threads() -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                LabError::Usage(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))
            })?,
        Err(_) => 1,
    };
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}
