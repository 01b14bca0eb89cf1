//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) the map runs on the rayon pool;
//! without it the same code path runs sequentially. Results come back in
//! input order either way, so outputs never depend on scheduling.

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Runs `f` inside a thread pool capped at `threads` workers. `None` or
/// `0` leaves the default pool size. Without the `parallel` feature the
/// closure just runs on the current thread.
#[cfg(feature = "parallel")]
pub fn with_thread_cap<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool construction")
            .install(f),
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_thread_cap<R>(_threads: Option<usize>, f: impl FnOnce() -> R) -> R {
    f()
}
