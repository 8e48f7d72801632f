//! Ordered data-parallel helpers.
//!
//! Every helper produces output in index order and reduces in a fixed
//! chunk order, so results never depend on the number of worker threads.

use alloc::vec::Vec;

/// Points per reduction chunk. Fixed so that floating-point summation order
/// is independent of scheduling.
pub(crate) const CHUNK: usize = 64;

#[cfg(feature = "parallel")]
pub(crate) fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs `f` over consecutive index ranges of length [`CHUNK`] and returns the
/// per-chunk results in order.
pub(crate) fn map_chunks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(core::ops::Range<usize>) -> T + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    map(chunks, |c| {
        let start = c * CHUNK;
        f(start..(start + CHUNK).min(n))
    })
}

/// Fills `out` in parallel, `row_len` values per item.
#[cfg(feature = "parallel")]
pub(crate) fn fill_rows<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    if row_len == 0 {
        return;
    }
    out.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn fill_rows<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    out.chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
}
