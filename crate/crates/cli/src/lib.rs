//! Command-line front end: loads systems, sectors, nonlinearities and signals from
//! files, runs the requested analysis and writes a deterministic JSON report.

pub mod config;
pub mod report;
pub mod run;

pub use config::{load, validate_inputs, Command, Diagnostic, Format, RunConfig};
pub use report::{Report, Status};
pub use run::run;

/// Sizes the global thread pool from `SECTOR_CERTIFY_THREADS` when set.
pub fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("SECTOR_CERTIFY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("SECTOR_CERTIFY_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}
