//! Pluggable evaluation of independent work items.
//!
//! Every parallel computation in this crate is expressed as a map over a
//! fixed number of chunks whose boundaries depend only on the problem size,
//! followed by an in-order reduction. An executor only decides *where* the
//! chunks run, so results are bit-identical for any worker count.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluate `f(0), f(1), ..., f(count - 1)` and return them in index order.
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}

/// Number of terms per chunk for index-range sums.
pub const TERM_CHUNK: usize = 2048;
/// Number of Monte Carlo samples per chunk (one RNG stream each).
pub const SAMPLE_CHUNK: usize = 4096;

/// Split `0..len` into consecutive ranges of at most `chunk` elements.
pub fn chunk_ranges(len: usize, chunk: usize) -> impl Iterator<Item = core::ops::Range<usize>> {
    let n = len.div_ceil(chunk);
    (0..n).map(move |i| i * chunk..((i + 1) * chunk).min(len))
}
