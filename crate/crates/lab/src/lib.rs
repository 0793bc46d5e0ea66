//! Experiment drivers, configuration and file output for `meanfield-core`.
//!
//! A run resolves a [`config::RunConfig`] from defaults, an optional JSON
//! file and dotted-path flags, computes every table in memory on a bounded
//! rayon pool, and then writes the resolved-config echo, the provenance map
//! and one CSV per table into `io.out_dir`.
//!
//! Table layouts are listed in [`schema`]; they are the contract with the
//! plotting scripts.

pub mod config;
pub mod drivers;
pub mod error;
pub mod exec;
pub mod output;
pub mod schema;

use std::path::{Path, PathBuf};

pub use config::{parse_and_validate, Experiment, Resolved, RunConfig};
pub use drivers::{Outcome, Report};
pub use error::{LabError, LabResult};

/// Runs the resolved experiment on a pool of `threads` workers (rayon's
/// choice when `None`) and writes its artifacts. Output bytes do not depend
/// on the pool size.
pub fn execute(resolved: &Resolved, threads: Option<usize>) -> LabResult<(Outcome, Vec<PathBuf>)> {
    let outcome = compute(resolved, threads)?;
    let artifacts = output::Artifacts {
        config_echo: resolved.echo(),
        provenance: resolved.provenance_json(),
        tables: outcome.tables.clone(),
    };
    let written = artifacts.write_to(Path::new(&resolved.config.io.out_dir))?;
    Ok((outcome, written))
}

/// Like [`execute`] without touching the file system.
pub fn compute(resolved: &Resolved, threads: Option<usize>) -> LabResult<Outcome> {
    let pool = exec::build_pool(threads)?;
    pool.install(|| drivers::run(&resolved.config))
}
