use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{dist_sq, sq, sqrt};
use crate::model::Ensemble;

/// Largest ensemble size solved exactly by the assignment method.
pub const W2_ASSIGNMENT_CAP: usize = 512;

/// Empirical 2-Wasserstein distance between two equal-size ensembles in the
/// full `θ` space. Uses sorted quantiles when only one coordinate varies in
/// either ensemble, and an exact assignment (O(N³)) up to
/// [`W2_ASSIGNMENT_CAP`] particles otherwise.
pub fn w2_estimate(a: &Ensemble, b: &Ensemble) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let n = a.len();
    if n == 0 {
        return Ok(0.0);
    }
    let d = a.dim();
    let varying =
        |e: &Ensemble| -> Vec<bool> { (0..d).map(|q| (1..n).any(|i| e.theta(i)[q] != e.theta(0)[q])).collect() };
    let (va, vb) = (varying(a), varying(b));
    let active: Vec<usize> = (0..d).filter(|&q| va[q] || vb[q]).collect();
    if active.len() <= 1 {
        let q = active.first().copied().unwrap_or(0);
        let mut xa: Vec<f64> = (0..n).map(|i| a.theta(i)[q]).collect();
        let mut xb: Vec<f64> = (0..n).map(|i| b.theta(i)[q]).collect();
        xa.sort_by(f64::total_cmp);
        xb.sort_by(f64::total_cmp);
        // Coordinates that are constant in both still differ by a fixed shift.
        let shift: f64 = (0..d).filter(|&k| k != q).map(|k| sq(a.theta(0)[k] - b.theta(0)[k])).sum();
        let s: f64 = xa.iter().zip(&xb).map(|(x, y)| sq(x - y)).sum();
        return Ok(sqrt(s / n as f64 + shift));
    }
    if n > W2_ASSIGNMENT_CAP {
        return Err(Error::unsupported("W2 between multi-dimensional ensembles is exact only up to 512 particles"));
    }
    let cost: Vec<f64> = (0..n * n).map(|k| dist_sq(a.theta(k / n), b.theta(k % n))).collect();
    let assign = min_cost_assignment(n, &cost);
    // Summing the matched costs in sorted order makes the result exactly symmetric.
    let mut matched: Vec<f64> = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    matched.sort_by(f64::total_cmp);
    Ok(sqrt(matched.iter().sum::<f64>() / n as f64))
}

/// Row-to-column assignment minimizing the total of a dense `n×n` cost
/// (shortest augmenting paths with dual potentials).
pub fn min_cost_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[row_of[j] - 1] = j - 1;
    }
    out
}
