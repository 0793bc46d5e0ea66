//! Closed-form Gaussian-mixture potentials for the truncated-ReLU profile.
//!
//! Under one mixture component the pair `(X₁, X₂) = (⟨a, x⟩, ⟨b, x⟩)` is a
//! centred Gaussian with covariance `C`. Conditioning on `X₁` leaves a
//! Gaussian `X₂`, whose profile expectation is explicit. The outer integral
//! over `X₁` is split at every kink of the integrand and done by
//! Gauss–Legendre, so the result is smooth in `(a, b)`. Gradients with
//! respect to `C` come from Price's identities:
//! `∂u/∂C₁₂ = E[s'(X₁) s'(X₂)]` and `∂u/∂C₁₁ = ½ E[s''(X₁) s(X₂)]`.

use alloc::vec::Vec;

use super::activation::TruncatedRelu;
use crate::error::Result;
use crate::math::{sq, sqrt};
use crate::quadrature::{normal_cdf, normal_pdf, GaussLegendre};

/// Integrals are truncated to `|z| ≤ Z_MAX`; the neglected mass is below 1e-22.
const Z_MAX: f64 = 9.0;
const FIXED_BREAKS: [f64; 2] = [-4.0, 4.0];

#[derive(Debug, Clone)]
pub(super) struct Conditional {
    rule: GaussLegendre,
    profile: TruncatedRelu,
}

/// Partial derivatives of one component's `u` in `(C₁₁, C₁₂, C₂₂)`.
#[derive(Debug, Clone, Copy)]
pub(super) struct PairGrads {
    pub d11: f64,
    pub d12: f64,
    pub d22: f64,
}

/// `E[(m + rZ)₊]`.
fn ramp(m: f64, r: f64) -> f64 {
    if r == 0.0 {
        return m.max(0.0);
    }
    let z = m / r;
    m * normal_cdf(z) + r * normal_pdf(z)
}

impl Conditional {
    pub(super) fn new(n_nodes: usize, profile: TruncatedRelu) -> Result<Self> {
        Ok(Self { rule: GaussLegendre::new(n_nodes)?, profile })
    }

    fn slope(&self) -> f64 {
        let (s1, s2, t1, t2) = self.profile.params();
        (s2 - s1) / (t2 - t1)
    }

    /// `E[s(μ + rZ)]`.
    fn mean(&self, mu: f64, r: f64) -> f64 {
        let (s1, _, t1, t2) = self.profile.params();
        s1 + self.slope() * (ramp(mu - t1, r) - ramp(mu - t2, r))
    }

    /// `P(t₁ ≤ μ + rZ < t₂)`.
    fn window(&self, mu: f64, r: f64) -> f64 {
        let (_, _, t1, t2) = self.profile.params();
        if r == 0.0 {
            return if t1 <= mu && mu < t2 { 1.0 } else { 0.0 };
        }
        normal_cdf((t2 - mu) / r) - normal_cdf((t1 - mu) / r)
    }

    /// `∫_lo^hi f` with the interval cut at `breaks` and at fixed points.
    fn integrate(&self, lo: f64, hi: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mut pts: Vec<f64> = Vec::with_capacity(breaks.len() + FIXED_BREAKS.len() + 2);
        pts.push(lo);
        pts.push(hi);
        pts.extend(breaks.iter().chain(&FIXED_BREAKS).filter(|&&b| b > lo && b < hi));
        pts.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        for seg in pts.windows(2) {
            if seg[1] > seg[0] {
                acc += self.rule.integrate(seg[0], seg[1], &f);
            }
        }
        acc
    }

    /// `E[s(X)]` for `X ~ N(0, c)` and its derivative in `c`.
    pub(super) fn single(&self, c: f64) -> (f64, f64) {
        let s = sqrt(c);
        let value = self.mean(0.0, s);
        if s == 0.0 {
            return (value, 0.0);
        }
        let (_, _, t1, t2) = self.profile.params();
        let d = 0.5 * self.slope() * (normal_pdf(t1 / s) - normal_pdf(t2 / s)) / s;
        (value, d)
    }

    /// `E[s(X₁) s(X₂)]` for covariance `[[c11, c12], [c12, c22]]`, `c11 > 0`.
    pub(super) fn pair_value(&self, c11: f64, c12: f64, c22: f64) -> f64 {
        let (l, beta, r) = conditional(c11, c12, c22);
        self.integrate(-Z_MAX, Z_MAX, &self.breaks(l, beta), |z| {
            normal_pdf(z) * self.profile.value(l * z) * self.mean(beta * z, r)
        })
    }

    /// Partial derivatives of [`Self::pair_value`] in `(c11, c12, c22)`.
    pub(super) fn pair_grads(&self, c11: f64, c12: f64, c22: f64) -> PairGrads {
        let (_, _, t1, t2) = self.profile.params();
        let k = self.slope();
        let (l, beta, r) = conditional(c11, c12, c22);
        let breaks = self.breaks(l, beta);
        let lo = (t1 / l).max(-Z_MAX);
        let hi = (t2 / l).min(Z_MAX);
        let d12 = sq(k) * self.integrate(lo, hi, &breaks[2..], |z| normal_pdf(z) * self.window(beta * z, r));
        // Point masses of s'' at the kinks, weighted by the conditional mean.
        let kink_term = |c_own: f64, c_other: f64| -> f64 {
            if c_own == 0.0 {
                return 0.0;
            }
            let sd = sqrt(c_own);
            let rc = sqrt((c_other - sq(c12) / c_own).max(0.0));
            let at = |t: f64| normal_pdf(t / sd) / sd * self.mean(c12 * t / c_own, rc);
            0.5 * k * (at(t1) - at(t2))
        };
        PairGrads { d11: kink_term(c11, c22), d12, d22: kink_term(c22, c11) }
    }

    /// Kinks of `s(l z)` and, in the rank-one limit, of `E[s(X₂) | z]`.
    fn breaks(&self, l: f64, beta: f64) -> [f64; 4] {
        let (_, _, t1, t2) = self.profile.params();
        let mut breaks = [t1 / l, t2 / l, f64::NAN, f64::NAN];
        if beta != 0.0 {
            breaks[2] = t1 / beta;
            breaks[3] = t2 / beta;
        }
        breaks
    }
}

/// `X₁ = l Z`, `X₂ | Z ~ N(β Z, r²)`.
fn conditional(c11: f64, c12: f64, c22: f64) -> (f64, f64, f64) {
    let l = sqrt(c11);
    let beta = c12 / l;
    // Roundoff can push the conditional variance slightly negative.
    (l, beta, sqrt((c22 - beta * beta).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Conditional {
        Conditional::new(24, TruncatedRelu::new(-0.3, 1.1, -0.4, 0.9).unwrap()).unwrap()
    }

    /// Brute-force reference: a fine midpoint rule in two dimensions.
    fn brute_pair(m: &Conditional, c11: f64, c12: f64, c22: f64) -> f64 {
        let l11 = c11.sqrt();
        let l21 = c12 / l11;
        let l22 = (c22 - l21 * l21).max(0.0).sqrt();
        let n = 4000;
        let h = 16.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let g1 = -8.0 + (i as f64 + 0.5) * h;
            let s1 = m.profile.value(l11 * g1);
            let mut inner = 0.0;
            for j in 0..n {
                let g2 = -8.0 + (j as f64 + 0.5) * h;
                inner += normal_pdf(g2) * m.profile.value(l21 * g1 + l22 * g2);
            }
            acc += normal_pdf(g1) * s1 * inner * h;
        }
        acc * h
    }

    #[test]
    fn single_matches_midpoint_rule_and_derivative() {
        let m = model();
        for c in [0.04, 0.5, 2.3] {
            let (v, d) = m.single(c);
            let s = c.sqrt();
            let n = 1_000_000;
            let h = 20.0 / n as f64;
            let q: f64 = (0..n)
                .map(|i| {
                    let g = -10.0 + (i as f64 + 0.5) * h;
                    normal_pdf(g) * m.profile.value(s * g) * h
                })
                .sum();
            assert!((v - q).abs() < 1e-9, "{v} vs {q}");
            let h = 1e-6;
            let fd = (m.single(c + h).0 - m.single(c - h).0) / (2.0 * h);
            assert!((fd - d).abs() < 1e-8, "{fd} vs {d}");
        }
    }

    #[test]
    fn pair_matches_two_dimensional_midpoint_rule() {
        let m = model();
        for (c11, c12, c22) in [(0.7, 0.2, 0.4), (1.3, -0.9, 1.1), (0.3, 0.0, 2.0)] {
            let got = m.pair_value(c11, c12, c22);
            let want = brute_pair(&m, c11, c12, c22);
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn price_derivatives_match_finite_differences() {
        let m = model();
        let (c11, c12, c22) = (0.7, 0.25, 0.45);
        let g = m.pair_grads(c11, c12, c22);
        let h = 1e-6;
        let f = |a: f64, b: f64, c: f64| m.pair_value(a, b, c);
        let fd11 = (f(c11 + h, c12, c22) - f(c11 - h, c12, c22)) / (2.0 * h);
        let fd12 = (f(c11, c12 + h, c22) - f(c11, c12 - h, c22)) / (2.0 * h);
        let fd22 = (f(c11, c12, c22 + h) - f(c11, c12, c22 - h)) / (2.0 * h);
        assert!((fd11 - g.d11).abs() < 1e-8, "{fd11} vs {}", g.d11);
        assert!((fd12 - g.d12).abs() < 1e-8, "{fd12} vs {}", g.d12);
        assert!((fd22 - g.d22).abs() < 1e-8, "{fd22} vs {}", g.d22);
    }

    #[test]
    fn rank_one_pair_is_the_second_moment() {
        let m = model();
        let c = 0.8;
        let got = m.pair_value(c, c, c);
        let s = c.sqrt();
        let want = m.integrate(-Z_MAX, Z_MAX, &[-0.4 / s, 0.9 / s], |z| normal_pdf(z) * sq(m.profile.value(s * z)));
        assert!((got - want).abs() < 1e-14);
        // Independent coordinates factorize.
        let ind = m.pair_value(0.5, 0.0, 1.5);
        assert!((ind - m.single(0.5).0 * m.single(1.5).0).abs() < 1e-14);
    }
}
