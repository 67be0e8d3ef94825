//! Order-preserving parallel map.
//!
//! With the `parallel` feature (default) work is spread over a scoped rayon
//! pool of `threads` workers; without it, or with `threads <= 1`, items are
//! processed sequentially. Results always come back in input order, so callers
//! observe identical output either way.

/// Applies `f` to every item, returning results in input order.
pub fn map<T, R, F>(items: Vec<T>, threads: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if threads > 1 && items.len() > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(|| items.into_par_iter().map(&f).collect());
        }
        log::warn!("could not build a {threads}-thread pool; running sequentially");
    }
    let _ = threads;
    items.into_iter().map(f).collect()
}

/// Whether this build can actually run work concurrently.
pub const fn enabled() -> bool {
    cfg!(feature = "parallel")
}
