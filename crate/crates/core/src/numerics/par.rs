//! Thread-count independent parallel reductions.

use rayon::prelude::*;

/// Items per chunk. Chunk boundaries never depend on the worker count, so the
/// summation order and the result are identical for any pool size.
pub const CHUNK: usize = 256;

/// Σ f(item), summed within fixed chunks in parallel and across chunks in order.
pub fn ordered_sum<T: Sync, F: Fn(&T) -> f64 + Sync>(items: &[T], f: F) -> f64 {
    let partial: Vec<f64> = items
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(&f).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// Parallel map preserving order.
pub fn ordered_map<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    items.par_iter().map(f).collect()
}
