//! Small numeric kernels shared by every module: libm wrappers, dot
//! products, deterministic pairwise reductions and the executor seam used
//! for per-item parallelism.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

/// Leaf size of the pairwise reductions. Even, so adjacent antithetic pairs
/// are never split across leaves.
pub const PAIRWISE_BLOCK: usize = 8;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sq(x: f64) -> f64 {
    x * x
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sqrt(dist_sq(a, b))
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn split_point(len: usize) -> usize {
    // Multiple of the block size, so leaves always start at even offsets.
    let half = len / 2;
    let mid = half - half % PAIRWISE_BLOCK;
    if mid == 0 {
        PAIRWISE_BLOCK
    } else {
        mid
    }
}

/// Pairwise (tree) summation of `term(i)` for `i` in `0..n`.
pub fn pairwise_sum_by(n: usize, term: &impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, term: &impl Fn(usize) -> f64) -> f64 {
        let len = hi - lo;
        if len <= PAIRWISE_BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + split_point(len);
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    rec(0, n, term)
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs.len(), &|i| xs[i])
}

pub fn pairwise_mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Vector-valued pairwise reduction: `out = Σ_i term_i` where `term(i, acc)`
/// adds the `i`-th contribution into `acc`. Leaves accumulate sequentially.
pub struct PairwiseAccumulator {
    width: usize,
    scratch: Vec<f64>,
}

impl PairwiseAccumulator {
    pub fn new(width: usize) -> Self {
        Self { width, scratch: Vec::new() }
    }

    pub fn accumulate(&mut self, n: usize, out: &mut [f64], term: &mut impl FnMut(usize, &mut [f64])) {
        debug_assert_eq!(out.len(), self.width);
        let mut depth = 0;
        let mut len = n;
        while len > PAIRWISE_BLOCK {
            len -= split_point(len);
            depth += 1;
        }
        // Right branches can be deeper than the leftmost spine; size generously.
        let levels = depth + 2 + usize::BITS as usize - n.leading_zeros() as usize;
        if self.scratch.len() < levels * self.width {
            self.scratch.resize(levels * self.width, 0.0);
        }
        Self::rec(0, n, out, &mut self.scratch, self.width, term);
    }

    fn rec(
        lo: usize,
        hi: usize,
        out: &mut [f64],
        scratch: &mut [f64],
        width: usize,
        term: &mut impl FnMut(usize, &mut [f64]),
    ) {
        out.fill(0.0);
        let len = hi - lo;
        if len <= PAIRWISE_BLOCK {
            for i in lo..hi {
                term(i, out);
            }
            return;
        }
        let mid = lo + split_point(len);
        Self::rec(lo, mid, out, scratch, width, term);
        let (right, rest) = scratch.split_at_mut(width);
        Self::rec(mid, hi, right, rest, width, term);
        for (o, r) in out.iter_mut().zip(right.iter()) {
            *o += *r;
        }
    }
}

/// Lexicographic order on rows using `f64::total_cmp`, returned as a
/// permutation of row indices. Used to make reductions over particles
/// independent of the order in which particles are stored.
pub fn canonical_order(rows: &[f64], width: usize) -> Vec<usize> {
    let n = rows.len() / width;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        let a = &rows[i * width..(i + 1) * width];
        let b = &rows[j * width..(j + 1) * width];
        for (x, y) in a.iter().zip(b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    });
    idx
}

/// Fills independent output chunks. Implementations may run chunks
/// concurrently but must call `f` exactly once per chunk; since chunks never
/// share state, results do not depend on scheduling.
pub trait Executor: Sync {
    fn for_each_chunk(&self, out: &mut [f64], chunk: usize, f: &(dyn Fn(usize, &mut [f64]) + Sync));
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn for_each_chunk(&self, out: &mut [f64], chunk: usize, f: &(dyn Fn(usize, &mut [f64]) + Sync)) {
        for (i, c) in out.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }
}

/// Convenience: `n` scalars computed independently.
pub fn map_indices(exec: &dyn Executor, n: usize, f: &(dyn Fn(usize) -> f64 + Sync)) -> Vec<f64> {
    let mut out = vec![0.0; n];
    exec.for_each_chunk(&mut out, 1, &|i, c| c[0] = f(i));
    out
}
