//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature (default) these run on the rayon global pool;
//! without it they fall back to plain iterators. Results are identical either
//! way, and independent of the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `items` and short-circuits on the first error in input order.
pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

/// Maps then folds with an associative `merge`; `identity` must be neutral.
#[cfg(feature = "parallel")]
pub fn map_reduce<T, A, F, M, I>(items: &[T], identity: I, f: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&T) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    items.par_iter().map(f).reduce(identity, merge)
}

#[cfg(not(feature = "parallel"))]
pub fn map_reduce<T, A, F, M, I>(items: &[T], identity: I, f: F, merge: M) -> A
where
    I: Fn() -> A,
    F: Fn(&T) -> A,
    M: Fn(A, A) -> A,
{
    items.iter().map(f).fold(identity(), merge)
}

/// Sizes the global pool. Only the first call has an effect.
pub fn init_workers(jobs: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs.filter(|n| *n > 0) {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("worker pool already initialised");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}
