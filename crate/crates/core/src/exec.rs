//! Execution policy for the data-parallel loops in the toolkit.
//!
//! Every parallel loop goes through the helpers here so that the sequential
//! and parallel paths compute bit-identical results: work is split into
//! fixed-size blocks whose layout depends only on the problem size, never on
//! the thread count, and block partial sums are combined in index order.
//!
//! Without the `parallel` feature, [`Execution::Parallel`] silently runs
//! sequentially.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Block length used for deterministic reductions.
const REDUCE_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work on multiple threads.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    #[inline]
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f(i)` for `i in 0..n` and collects results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Applies `f(chunk_index, chunk)` to consecutive `chunk`-sized pieces of
    /// `data` (the last piece may be shorter).
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        assert!(chunk > 0);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }

    /// Deterministic sum of `f(range)` over fixed blocks covering `0..n`.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(Range<usize>) -> f64 + Sync + Send,
    {
        let blocks = n.div_ceil(REDUCE_BLOCK);
        let partial = self.map(blocks, |b| {
            let lo = b * REDUCE_BLOCK;
            f(lo..(lo + REDUCE_BLOCK).min(n))
        });
        partial.into_iter().sum()
    }

    /// Deterministic dot product.
    pub fn dot(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        self.sum(a.len(), |r| a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_sums_are_bit_identical() {
        let v: Vec<f64> = (0..100_003).map(|i| (i as f64 * 0.37).sin() * 1e-3).collect();
        let a = Execution::Sequential.dot(&v, &v);
        let b = Execution::Parallel.dot(&v, &v);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let out = Execution::Parallel.map(1000, |i| i * 2);
        assert!(out.iter().enumerate().all(|(i, &v)| v == 2 * i));
    }

    #[test]
    fn chunked_writes_cover_everything() {
        let mut v = vec![0usize; 1001];
        Execution::Parallel.for_each_chunk_mut(&mut v, 100, |c, s| {
            for (k, x) in s.iter_mut().enumerate() {
                *x = c * 100 + k;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| x == i));
    }
}
