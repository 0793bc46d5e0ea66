//! Summary statistics for the scaling studies.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{ln, sq, sqrt};

/// Median of the finite values; `None` if there are none.
pub fn median(xs: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Ordinary least squares `y ≈ intercept + slope·x` with a 95% interval on
/// the slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Two-sided 97.5% quantiles of Student's t for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
    2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];

fn t_quantile(df: usize) -> f64 {
    match df {
        0 => f64::INFINITY,
        1..=30 => T975[df - 1],
        _ => 1.960,
    }
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::config("a line fit needs at least two (x, y) pairs"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::config("line fit inputs must be finite"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::config("line fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let df = xs.len() - 2;
    let slope_stderr = if df == 0 {
        0.0
    } else {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| sq(y - intercept - slope * x)).sum();
        sqrt(rss / df as f64 / sxx)
    };
    let half = if df == 0 { 0.0 } else { t_quantile(df) * slope_stderr };
    Ok(LinearFit { slope, intercept, slope_stderr, ci_low: slope - half, ci_high: slope + half })
}

/// OLS of `ln y` on `ln x`. Non-positive values are rejected.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::config("log-log fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| ln(*x)).collect();
    let ly: Vec<f64> = ys.iter().map(|y| ln(*y)).collect();
    ols(&lx, &ly)
}
