//! Execution strategy for the embarrassingly parallel inner loops
//! (simulation replicates, bootstrap resamples, kernel regression rows).
//!
//! With the `parallel` feature (default) the indexed maps fan out over
//! rayon; without it they run sequentially. Results are always collected
//! in index order, so the two modes — and any rayon worker count — produce
//! bitwise-identical output. The sequential path stays compiled either way
//! so the benchmark suite can compare both.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    indexed_map_seq(n, f)
}

/// Sequential version of [`indexed_map`], available regardless of features.
pub fn indexed_map_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
