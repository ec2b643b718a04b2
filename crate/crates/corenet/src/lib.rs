//! Files, run directories, and the command line around `corenet_core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod datafile;
pub mod error;
pub mod fsutil;
pub mod ptl_dir;
pub mod report;
pub mod run;

pub use error::{Error, Result};

/// Sizes the global thread pool from `CORENET_THREADS` when it is set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("CORENET_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config(format!("CORENET_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))
}
