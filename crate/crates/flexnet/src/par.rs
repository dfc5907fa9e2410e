//! Thin switch between rayon and sequential execution for the hot loops.
//!
//! Every call site is data-parallel with a deterministic write pattern (each
//! output slot owned by exactly one closure invocation), so results are
//! bit-identical with and without the `parallel` feature and across thread
//! counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fill `out` in fixed-size chunks; `f` receives the chunk's base index and
/// the chunk slice. Chunking keeps the per-task work coarse.
#[cfg(feature = "parallel")]
pub(crate) fn fill_chunks<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    out.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(c, slice)| f(c * chunk, slice));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn fill_chunks<T, F>(out: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    let mut base = 0;
    for slice in out.chunks_mut(chunk) {
        f(base, slice);
        base += slice.len();
    }
}

/// Map `0..n` and reduce with an associative, commutative `combine`.
#[cfg(feature = "parallel")]
pub(crate) fn map_reduce<T, M, C>(n: usize, map: M, identity: T, combine: C) -> T
where
    T: Send + Clone + Sync,
    M: Fn(usize) -> T + Send + Sync,
    C: Fn(T, T) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(map)
        .reduce(|| identity.clone(), &combine)
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_reduce<T, M, C>(n: usize, map: M, identity: T, combine: C) -> T
where
    T: Clone,
    M: Fn(usize) -> T,
    C: Fn(T, T) -> T,
{
    let mut acc = identity;
    for i in 0..n {
        acc = combine(acc, map(i));
    }
    acc
}

/// Map each index of `0..n` to a value, collecting in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
