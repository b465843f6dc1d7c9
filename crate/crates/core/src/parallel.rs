//! Replication-level parallelism. `TNET_THREADS` caps the worker count.

use std::sync::Once;

use rayon::prelude::*;

use crate::error::Result;

static INIT: Once = Once::new();

/// Thread cap from `TNET_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("TNET_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Builds the global pool once, honoring `TNET_THREADS`. Later calls are
/// no-ops, as is calling after another part of the process built the pool.
pub fn init_threads() {
    INIT.call_once(|| {
        if let Some(n) = thread_cap() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    });
}

/// `f(0), …, f(count − 1)` in parallel, returned in index order.
pub(crate) fn par_try_map<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    init_threads();
    (0..count).into_par_iter().map(f).collect()
}
