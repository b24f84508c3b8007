//! Data-parallel helpers with a sequential fallback.
//!
//! Every kernel writes disjoint output blocks and each block is reduced in a
//! fixed order, so the parallel and sequential builds produce bit-identical
//! results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(block_index, block)` for every `block_len`-sized block of `out`.
pub fn for_each_block<T, F>(out: &mut [T], block_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if block_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(block_len).enumerate().for_each(|(i, b)| f(i, b));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(block_len).enumerate().for_each(|(i, b)| f(i, b));
}

/// Maps `f` over `0..n`, keeping results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
