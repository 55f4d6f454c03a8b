//! Execution strategy for the per-point loops.
//!
//! Every reduction splits the index range into fixed-size chunks, reduces each
//! chunk sequentially and then combines the chunk results with a balanced
//! pairwise tree. Chunk boundaries never depend on the worker count, so a sum
//! is bit-identical whether it runs on one thread or many.

use std::ops::Range;

/// Number of points reduced sequentially inside one chunk.
pub const CHUNK_LEN: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on, otherwise the
    /// sequential path.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f` on every chunk of `0..len`; results are returned in chunk order.
    pub fn map_chunks<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync + Send,
    {
        let n_chunks = len.div_ceil(CHUNK_LEN);
        let range = |c: usize| c * CHUNK_LEN..((c + 1) * CHUNK_LEN).min(len);
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..n_chunks).into_par_iter().map(|c| f(range(c))).collect();
        }
        (0..n_chunks).map(|c| f(range(c))).collect()
    }

    /// Evaluates `f` at every index, preserving order.
    pub fn map_points<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Deterministic sum of `f(i)` over `0..len`.
    pub fn sum<F>(self, len: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let partial = self.map_chunks(len, |r| r.map(&f).sum::<f64>());
        pairwise_sum(&partial)
    }

    /// Deterministic elementwise sum of vectors of length `width`.
    ///
    /// `f` receives a chunk and an accumulator zeroed to `width` entries.
    pub fn sum_vectors<F>(self, len: usize, width: usize, f: F) -> Vec<f64>
    where
        F: Fn(Range<usize>, &mut [f64]) + Sync + Send,
    {
        let partial = self.map_chunks(len, |r| {
            let mut acc = vec![0.0; width];
            f(r, &mut acc);
            acc
        });
        pairwise_sum_vectors(partial, width)
    }
}

/// Balanced binary-tree sum. The tree shape depends on the length only.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

pub fn pairwise_sum_vectors(mut parts: Vec<Vec<f64>>, width: usize) -> Vec<f64> {
    if parts.is_empty() {
        return vec![0.0; width];
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}
