//! Execution strategy for data-parallel inner loops.
//!
//! `map_indexed` fans independent work items out to rayon when the
//! `parallel` feature is enabled; `map_indexed_seq` is the plain-iterator
//! path and is always available so benchmarks can compare both on the same
//! build. Outputs are collected in index order, so the two paths produce
//! identical results as long as each item only uses its own substream.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n` sequentially.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    map_indexed_seq(n, f)
}
