//! Order-preserving data parallelism. With the `parallel` feature the maps run
//! on rayon; without it they run sequentially. Results are always returned in
//! input order, so any reduction over them is bit-identical across builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Like [`map_ordered`] but forced sequential, for benchmarking and tests.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Runs `f` on a pool of `workers` threads (`0` keeps the global pool).
/// Sequential builds ignore the worker count.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
