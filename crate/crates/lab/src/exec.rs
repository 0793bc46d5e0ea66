use meanfield_core::Executor;
use rayon::prelude::*;

use crate::error::{LabError, LabResult};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "MEANFIELD_LAB_THREADS";

/// Runs chunks on the current rayon pool. Chunks are independent, so the
/// result is the same for any pool size.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl Executor for RayonExecutor {
    fn for_each_chunk(&self, out: &mut [f64], chunk: usize, f: &(dyn Fn(usize, &mut [f64]) + Sync)) {
        out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Thread count from `MEANFIELD_LAB_THREADS`; `None` leaves the choice to rayon.
pub fn threads_from_env() -> LabResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(LabError::config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

pub fn build_pool(threads: Option<usize>) -> LabResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| LabError::config(format!("cannot start worker pool: {e}")))
}
