//! Command-line driver for the morph-series embedding audits.

pub mod audits;
pub mod config;
pub mod fixture;
pub mod report;

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "MORPH_AUDIT_THREADS";

/// Configures the global rayon pool from `MORPH_AUDIT_THREADS`, if set.
/// Results never depend on the pool size; this only bounds CPU use.
pub fn init_thread_pool() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("{THREADS_ENV}={raw:?} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("configuring thread pool: {e}"))
}
