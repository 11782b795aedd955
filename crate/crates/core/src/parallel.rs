//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature enabled the helpers dispatch to rayon; without
//! it (or with [`Execution::Sequential`]) they run on the calling thread.
//! Outputs are always collected in index order, so callers that reduce the
//! returned vector sequentially get bit-identical results either way.

/// Runtime execution choice. `Parallel` degrades to sequential when the crate
/// is built without the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Map `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Map `f` over a slice, returning results in input order.
pub fn map_slice<I, T, F>(exec: Execution, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Map `f` over consecutive chunks of `items` (the last chunk may be short).
pub fn map_chunks<I, T, F>(exec: Execution, items: &[I], chunk: usize, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&[I]) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_chunks(chunk).map(f).collect();
    }
    let _ = exec;
    items.chunks(chunk).map(f).collect()
}

/// Configure the global worker pool. A no-op without the `parallel` feature.
pub fn set_num_threads(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}
