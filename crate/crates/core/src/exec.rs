//! Execution helpers for sweeping independent work items.
//!
//! With the `parallel` feature (on by default) [`map_slice`] distributes items
//! over the rayon thread pool; without it the loop is sequential. Results are
//! collected in input order and every item is computed independently — no
//! shared state and no cross-item floating-point reduction — so the output is
//! bitwise identical for any thread count, including one.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items` (parallel when the `parallel` feature is enabled),
/// preserving input order.
#[cfg(feature = "parallel")]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items` sequentially (the `parallel` feature is disabled).
#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Always-sequential variant, kept available so the two execution paths can be
/// compared (see the `norm_curve` benchmark) even when `parallel` is enabled.
pub fn map_slice_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Cap the number of worker threads used by [`map_slice`].
///
/// Must be called before the first parallel map; fails with a message if the
/// global thread pool already exists. A no-op without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Cap the number of worker threads used by [`map_slice`].
///
/// Must be called before the first parallel map; fails with a message if the
/// global thread pool already exists. A no-op without the `parallel` feature.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> Result<(), String> {
    Ok(())
}
