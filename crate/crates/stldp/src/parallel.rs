//! Rayon-backed ensemble; results come back in index order, so outputs do
//! not depend on the worker count.

use rayon::prelude::*;
use stldp_core::ldp::{Ensemble, PathOutcome};

/// Environment variable holding the worker count (unset or 0: all cores).
pub const WORKERS_ENV: &str = "STLDP_WORKERS";

pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(workers: usize) -> Pool {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        Pool { pool }
    }

    pub fn from_env() -> Pool {
        let workers = std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(0);
        Pool::new(workers)
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl Ensemble for Pool {
    fn map_paths(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> stldp_core::Result<PathOutcome> + Sync),
    ) -> Vec<stldp_core::Result<PathOutcome>> {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
