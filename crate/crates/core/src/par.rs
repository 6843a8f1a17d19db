//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the closures run on the rayon pool;
//! without it they run sequentially. Results are always collected in index
//! order and reduced sequentially, so outputs are bitwise identical between
//! the two builds and across worker counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed work-unit size for chunked Monte Carlo loops. Chunk boundaries (and
/// therefore RNG streams) never depend on the number of workers.
pub const CHUNK: usize = 64;

/// Evaluates `f(i)` for `i in 0..n` and returns the results in order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Splits `0..n` into `CHUNK`-sized ranges and maps each range.
pub fn map_chunks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, std::ops::Range<usize>) -> T + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    map_indexed(n_chunks, |c| {
        let start = c * CHUNK;
        f(c, start..(start + CHUNK).min(n))
    })
}

/// Runs two independent closures, concurrently when the feature is enabled.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}

/// Configures the global worker pool. A no-op in sequential builds or when
/// the pool was already initialized.
pub fn set_workers(workers: usize) {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
