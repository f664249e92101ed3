//! Chunked execution of data-parallel loops.
//!
//! Hot loops (concordance pair counting, batch gradient accumulation,
//! cohort generation) fan out over fixed-size chunks. Chunk partials are
//! combined in chunk order, so the floating-point reduction tree is the
//! same whether chunks run on rayon or sequentially — results are
//! bit-identical for every thread count, including the sequential
//! fallback built without the `parallel` feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use std::ops::Range;

/// Chunk length for index-range fan-out.
pub const CHUNK: usize = 64;

/// How a kernel should execute. `Parallel` silently degrades to
/// `Sequential` when the crate is built without the `parallel` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl Default for Mode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(n.div_ceil(chunk.max(1)));
    let mut lo = 0;
    while lo < n {
        let hi = (lo + chunk).min(n);
        out.push(lo..hi);
        lo = hi;
    }
    out
}

/// Map chunks of `0..n` to partials and fold them in chunk order.
pub fn map_reduce<P, M, R>(n: usize, mode: Mode, map: M, identity: P, reduce: R) -> P
where
    P: Send,
    M: Fn(Range<usize>) -> P + Sync + Send,
    R: Fn(P, P) -> P,
{
    let ranges = chunk_ranges(n, CHUNK);
    let partials: Vec<P> = match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => ranges.into_par_iter().map(map).collect(),
        _ => ranges.into_iter().map(map).collect(),
    };
    partials.into_iter().fold(identity, reduce)
}

/// Map `0..n` to one value per index, preserving index order.
pub fn map_collect<T, F>(n: usize, mode: Mode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_cover_exactly() {
        let ranges = chunk_ranges(150, 64);
        assert_eq!(ranges, vec![0..64, 64..128, 128..150]);
        assert!(chunk_ranges(0, 64).is_empty());
    }

    #[test]
    fn sequential_and_parallel_sums_are_bit_identical() {
        // Irrational-ish summands make any reordering visible.
        let f = |r: Range<usize>| r.map(|i| ((i as f64) + 0.1).sqrt()).sum::<f64>();
        let seq = map_reduce(10_000, Mode::Sequential, f, 0.0, |a, b| a + b);
        let par = map_reduce(10_000, Mode::Parallel, f, 0.0, |a, b| a + b);
        assert_eq!(seq.to_bits(), par.to_bits());
    }

    #[test]
    fn map_collect_preserves_order() {
        let seq = map_collect(1000, Mode::Sequential, |i| i * 2);
        let par = map_collect(1000, Mode::Parallel, |i| i * 2);
        assert_eq!(seq, par);
    }
}
