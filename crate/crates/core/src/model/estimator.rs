use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::activation::{Activation, TruncatedRelu};
use super::analytic::Conditional;
use super::data::{AnisotropicGaussians, DataModel, FrozenSet};
use crate::error::{check_dim, Error, Result};
use crate::math::{dot, pairwise_sum_by, sq, sqrt, PairwiseAccumulator};
use crate::quadrature::GaussHermite;

/// How expectations over `(x, y)` become numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorStrategy {
    /// Average over a frozen sample of `n_mc` points drawn from `seed`.
    MonteCarlo { n_mc: usize, seed: u64 },
    /// Tensor Gauss–Hermite rule with `n_nodes` per axis.
    GaussHermite { n_nodes: usize },
    /// Exact conditioning on one projection and a kink-aware
    /// Gauss–Legendre rule with `n_nodes` per segment for the other. Unlike
    /// the other two strategies the potentials are smooth in `w`.
    Analytic { n_nodes: usize },
}

impl Default for EstimatorStrategy {
    fn default() -> Self {
        EstimatorStrategy::MonteCarlo { n_mc: 4096, seed: 0 }
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Samples(FrozenSet),
    Quadrature { rule: GaussHermite, mixture: AnisotropicGaussians, profile: TruncatedRelu },
    Analytic { model: Conditional, mixture: AnisotropicGaussians },
}

/// Deterministic estimator of `v(w) = −E[y σ(x; w)]` and
/// `u(w₁, w₂) = E[σ(x; w₁) σ(x; w₂)]` and their gradients.
///
/// The frozen set (or quadrature table) is built once and reused by every
/// evaluation, so all potentials in a run share common random numbers.
#[derive(Debug, Clone)]
pub struct PopulationEstimator {
    strategy: EstimatorStrategy,
    dim: usize,
    backend: Backend,
}

/// Relative threshold below which the 2×2 covariance is treated as rank one.
const RANK_ONE_TOL: f64 = 1e-12;

impl PopulationEstimator {
    pub fn new(strategy: EstimatorStrategy, data: &dyn DataModel, activation: &dyn Activation) -> Result<Self> {
        let dim = data.dim();
        activation.check_dims(dim, dim)?;
        let backend = match strategy {
            EstimatorStrategy::MonteCarlo { n_mc, seed } => Backend::Samples(data.frozen_set(n_mc, seed)?),
            EstimatorStrategy::GaussHermite { n_nodes } => {
                let (mixture, profile) = closed_form_inputs(data, activation)?;
                Backend::Quadrature { rule: GaussHermite::new(n_nodes)?, mixture, profile }
            }
            EstimatorStrategy::Analytic { n_nodes } => {
                let (mixture, profile) = closed_form_inputs(data, activation)?;
                Backend::Analytic { model: Conditional::new(n_nodes, profile)?, mixture }
            }
        };
        Ok(Self { strategy, dim, backend })
    }

    /// Monte Carlo estimator over an explicit set of points.
    pub fn from_frozen(set: FrozenSet) -> Self {
        let n_mc = set.len();
        Self {
            strategy: EstimatorStrategy::MonteCarlo { n_mc, seed: 0 },
            dim: set.dim(),
            backend: Backend::Samples(set),
        }
    }

    pub fn strategy(&self) -> EstimatorStrategy {
        self.strategy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The frozen sample, if this is a Monte Carlo estimator.
    pub fn frozen(&self) -> Option<&FrozenSet> {
        match &self.backend {
            Backend::Samples(set) => Some(set),
            Backend::Quadrature { .. } | Backend::Analytic { .. } => None,
        }
    }

    pub fn mean_y2(&self) -> f64 {
        match &self.backend {
            Backend::Samples(set) => set.mean_y2(),
            Backend::Quadrature { mixture, .. } | Backend::Analytic { mixture, .. } => {
                mixture.components().iter().map(|&(p, y, _)| p * y * y).sum()
            }
        }
    }

    pub fn v(&self, act: &dyn Activation, w: &[f64]) -> f64 {
        match &self.backend {
            Backend::Samples(set) => {
                let n = set.len();
                -pairwise_sum_by(n, &|j| set.y(j) * act.sigma(set.x(j), w)) / n as f64
            }
            Backend::Quadrature { rule, mixture, profile } => {
                let uw = mixture.project(w);
                let mut acc = 0.0;
                for (p, y, c) in mixture.components() {
                    let s = sqrt(mixture.bilinear(c, &uw, &uw));
                    acc -= p * y * rule.expect(|g| profile.value(s * g));
                }
                acc
            }
            Backend::Analytic { model, mixture } => {
                let uw = mixture.project(w);
                let mut acc = 0.0;
                for (p, y, c) in mixture.components() {
                    acc -= p * y * model.single(mixture.bilinear(c, &uw, &uw)).0;
                }
                acc
            }
        }
    }

    /// Writes `∇_w v(w)` into `out`.
    pub fn grad_v(&self, act: &dyn Activation, w: &[f64], out: &mut [f64]) {
        match &self.backend {
            Backend::Samples(set) => {
                let n = set.len();
                let mut acc = PairwiseAccumulator::new(out.len());
                acc.accumulate(n, out, &mut |j, o| {
                    act.sigma_accumulate_grad(set.x(j), w, -set.y(j), o);
                });
                let inv = 1.0 / n as f64;
                out.iter_mut().for_each(|o| *o *= inv);
            }
            Backend::Quadrature { rule, mixture, profile } => {
                out.fill(0.0);
                let uw = mixture.project(w);
                for (p, y, c) in mixture.components() {
                    let s = sqrt(mixture.bilinear(c, &uw, &uw));
                    if s == 0.0 {
                        continue;
                    }
                    // d/ds E s(s g) = E[s'(s g) g]; ∇_w s = Σ w / s.
                    let ds = rule.expect(|g| profile.derivative(s * g) * g);
                    let sw = mixture.apply_cov(c, &uw);
                    crate::math::axpy(-p * y * ds / s, &sw, out);
                }
            }
            Backend::Analytic { model, mixture } => {
                out.fill(0.0);
                let uw = mixture.project(w);
                for (p, y, c) in mixture.components() {
                    let (_, dc) = model.single(mixture.bilinear(c, &uw, &uw));
                    if dc != 0.0 {
                        crate::math::axpy(-p * y * 2.0 * dc, &mixture.apply_cov(c, &uw), out);
                    }
                }
            }
        }
    }

    pub fn u(&self, act: &dyn Activation, w1: &[f64], w2: &[f64]) -> f64 {
        match &self.backend {
            Backend::Samples(set) => {
                let n = set.len();
                pairwise_sum_by(n, &|j| act.sigma(set.x(j), w1) * act.sigma(set.x(j), w2)) / n as f64
            }
            Backend::Quadrature { rule, mixture, profile } => {
                let (a, b) = if needs_swap(w1, w2) { (w2, w1) } else { (w1, w2) };
                quadrature_u(rule, mixture, profile, a, b, None)
            }
            Backend::Analytic { model, mixture } => {
                let (a, b) = if needs_swap(w1, w2) { (w2, w1) } else { (w1, w2) };
                analytic_u(model, mixture, a, b)
            }
        }
    }

    /// Writes `∇_{w₁} u(w₁, w₂)` into `out`.
    pub fn grad1_u(&self, act: &dyn Activation, w1: &[f64], w2: &[f64], out: &mut [f64]) {
        match &self.backend {
            Backend::Samples(set) => {
                let n = set.len();
                let mut acc = PairwiseAccumulator::new(out.len());
                acc.accumulate(n, out, &mut |j, o| {
                    let s2 = act.sigma(set.x(j), w2);
                    act.sigma_accumulate_grad(set.x(j), w1, s2, o);
                });
                let inv = 1.0 / n as f64;
                out.iter_mut().for_each(|o| *o *= inv);
            }
            Backend::Quadrature { rule, mixture, profile } => {
                let swapped = needs_swap(w1, w2);
                let (a, b) = if swapped { (w2, w1) } else { (w1, w2) };
                let mut ga = vec![0.0; self.dim];
                let mut gb = vec![0.0; self.dim];
                quadrature_u(rule, mixture, profile, a, b, Some((&mut ga, &mut gb)));
                out.copy_from_slice(if swapped { &gb } else { &ga });
            }
            Backend::Analytic { model, mixture } => {
                let swapped = needs_swap(w1, w2);
                let (a, b) = if swapped { (w2, w1) } else { (w1, w2) };
                let mut ga = vec![0.0; self.dim];
                let mut gb = vec![0.0; self.dim];
                analytic_grad_u(model, mixture, a, b, &mut ga, &mut gb);
                out.copy_from_slice(if swapped { &gb } else { &ga });
            }
        }
    }

    /// `u(w₁, w₂)` together with `∇_{w₁} u(w₁, w₂)` in `g1` and
    /// `∇_{w₂} u(w₁, w₂)` in `g2`. Bitwise equal to the separate calls.
    pub fn u_with_grads(&self, act: &dyn Activation, w1: &[f64], w2: &[f64], g1: &mut [f64], g2: &mut [f64]) -> f64 {
        let swapped = needs_swap(w1, w2);
        let (a, b) = if swapped { (w2, w1) } else { (w1, w2) };
        let (ga, gb) = if swapped { (g2, g1) } else { (g1, g2) };
        match &self.backend {
            Backend::Samples(_) => {
                self.grad1_u(act, a, b, ga);
                self.grad1_u(act, b, a, gb);
                self.u(act, a, b)
            }
            Backend::Quadrature { rule, mixture, profile } => {
                let mut va = vec![0.0; self.dim];
                let mut vb = vec![0.0; self.dim];
                let u = quadrature_u(rule, mixture, profile, a, b, Some((&mut va, &mut vb)));
                ga.copy_from_slice(&va);
                gb.copy_from_slice(&vb);
                u
            }
            Backend::Analytic { model, mixture } => {
                analytic_grad_u(model, mixture, a, b, ga, gb);
                analytic_u(model, mixture, a, b)
            }
        }
    }

    pub(crate) fn check(&self, dim_w: usize) -> Result<()> {
        check_dim(self.dim, dim_w)
    }
}

fn closed_form_inputs(
    data: &dyn DataModel,
    activation: &dyn Activation,
) -> Result<(AnisotropicGaussians, TruncatedRelu)> {
    let mixture = data
        .as_gaussian_mixture()
        .ok_or_else(|| Error::unsupported("quadrature estimators need Gaussian-mixture data"))?;
    let profile = activation
        .dot_profile()
        .ok_or_else(|| Error::unsupported("quadrature estimators need a dot-product activation"))?;
    Ok((mixture.clone(), *profile))
}

/// `Σ_c p_c u_c(a, b)` from the closed-form conditional model.
fn analytic_u(model: &Conditional, mixture: &AnisotropicGaussians, a: &[f64], b: &[f64]) -> f64 {
    let ua = mixture.project(a);
    let ub = mixture.project(b);
    let mut value = 0.0;
    for (pc, _, c) in mixture.components() {
        let c11 = mixture.bilinear(c, &ua, &ua);
        value += pc
            * if c11 == 0.0 {
                // Both arguments vanish (canonical order puts the larger first).
                sq(model.single(0.0).0)
            } else {
                model.pair_value(c11, mixture.bilinear(c, &ua, &ub), mixture.bilinear(c, &ub, &ub))
            };
    }
    value
}

/// Gradients of [`analytic_u`] in `a` and `b`, mapped back from the
/// covariance derivatives.
fn analytic_grad_u(
    model: &Conditional,
    mixture: &AnisotropicGaussians,
    a: &[f64],
    b: &[f64],
    ga: &mut [f64],
    gb: &mut [f64],
) {
    ga.fill(0.0);
    gb.fill(0.0);
    let ua = mixture.project(a);
    let ub = mixture.project(b);
    for (pc, _, c) in mixture.components() {
        let c11 = mixture.bilinear(c, &ua, &ua);
        if c11 == 0.0 {
            continue;
        }
        let g = model.pair_grads(c11, mixture.bilinear(c, &ua, &ub), mixture.bilinear(c, &ub, &ub));
        let sa = mixture.apply_cov(c, &ua);
        let sb = mixture.apply_cov(c, &ub);
        crate::math::axpy(pc * 2.0 * g.d11, &sa, ga);
        crate::math::axpy(pc * g.d12, &sb, ga);
        crate::math::axpy(pc * 2.0 * g.d22, &sb, gb);
        crate::math::axpy(pc * g.d12, &sa, gb);
    }
}

/// Orders the pair so that the quadrature is bitwise symmetric: larger
/// Euclidean norm first (so a zero first argument implies both are zero),
/// ties broken lexicographically.
fn needs_swap(w1: &[f64], w2: &[f64]) -> bool {
    let n1 = dot(w1, w1);
    let n2 = dot(w2, w2);
    let ord = n2.total_cmp(&n1).then_with(|| {
        for (x, y) in w1.iter().zip(w2) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    });
    ord == Ordering::Greater
}

/// `Σ_c p_c Σ_{k,l} p_k p_l s(L11 g_k) s(L21 g_k + L22 g_l)` where `L` is
/// the Cholesky factor of the covariance of `(⟨a, x⟩, ⟨b, x⟩)` under
/// component `c`. Optionally also the exact derivative of that sum with
/// respect to `a` and `b`.
fn quadrature_u(
    rule: &GaussHermite,
    mixture: &AnisotropicGaussians,
    profile: &TruncatedRelu,
    a: &[f64],
    b: &[f64],
    mut grads: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
) -> f64 {
    if let Some((ga, gb)) = grads.as_mut() {
        ga.fill(0.0);
        gb.fill(0.0);
    }
    let ua = mixture.project(a);
    let ub = mixture.project(b);
    let g = rule.nodes();
    let p = rule.weights();
    let mut value = 0.0;
    for (pc, _, c) in mixture.components() {
        let c11 = mixture.bilinear(c, &ua, &ua);
        let c12 = mixture.bilinear(c, &ua, &ub);
        let c22 = mixture.bilinear(c, &ub, &ub);
        if c11 == 0.0 {
            // Both arguments vanish (canonical order puts the larger first).
            let s0 = profile.value(0.0);
            value += pc * s0 * s0;
            continue;
        }
        let l11 = sqrt(c11);
        let l21 = c12 / l11;
        let r = c22 - l21 * l21;
        let rank_one = r <= RANK_ONE_TOL * c22;
        let l22 = if rank_one { 0.0 } else { sqrt(r) };

        let mut q = 0.0;
        let (mut d11, mut d21, mut d22) = (0.0, 0.0, 0.0);
        for k in 0..g.len() {
            let z1 = l11 * g[k];
            let s1 = profile.value(z1);
            let ds1 = profile.derivative(z1);
            let mut inner = 0.0;
            let (mut i11, mut i21, mut i22) = (0.0, 0.0, 0.0);
            for l in 0..g.len() {
                let z2 = l21 * g[k] + l22 * g[l];
                let s2 = profile.value(z2);
                inner += p[l] * s2;
                if grads.is_some() {
                    let ds2 = profile.derivative(z2);
                    i11 += p[l] * s2;
                    i21 += p[l] * ds2;
                    i22 += p[l] * ds2 * g[l];
                }
            }
            q += p[k] * s1 * inner;
            d11 += p[k] * ds1 * g[k] * i11;
            d21 += p[k] * s1 * g[k] * i21;
            d22 += p[k] * s1 * i22;
        }
        value += pc * q;

        if let Some((ga, gb)) = grads.as_mut() {
            // Chain rule from (L11, L21, L22) to (C11, C12, C22). In the
            // rank-one limit ∂Q/∂L22 vanishes identically (Σ_l p_l g_l = 0
            // with no kink crossings), so the L22 terms are dropped.
            let mut dc11 = d11 / (2.0 * l11) - d21 * l21 / (2.0 * c11);
            let mut dc12 = d21 / l11;
            let mut dc22 = 0.0;
            if !rank_one {
                dc11 += d22 * l21 * l21 / (2.0 * c11 * l22);
                dc12 -= d22 * l21 / (l11 * l22);
                dc22 += d22 / (2.0 * l22);
            }
            let sa = mixture.apply_cov(c, &ua);
            let sb = mixture.apply_cov(c, &ub);
            crate::math::axpy(pc * 2.0 * dc11, &sa, ga);
            crate::math::axpy(pc * dc12, &sb, ga);
            crate::math::axpy(pc * 2.0 * dc22, &sb, gb);
            crate::math::axpy(pc * dc12, &sa, gb);
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Rotation, TruncatedReluDot};
    use crate::rng::{Purpose, StreamRng};

    fn setup(delta: f64) -> (AnisotropicGaussians, TruncatedReluDot) {
        let data = AnisotropicGaussians::new(4, 0.5, delta, Rotation::Haar { seed: 11 }).unwrap();
        let act = TruncatedReluDot::new(-0.3, 1.1, -0.4, 0.9).unwrap();
        (data, act)
    }

    fn gh(data: &AnisotropicGaussians, act: &TruncatedReluDot) -> PopulationEstimator {
        PopulationEstimator::new(EstimatorStrategy::GaussHermite { n_nodes: 41 }, data, act).unwrap()
    }

    #[test]
    fn balanced_frozen_set_gives_zero_v_at_origin() {
        let (data, act) = setup(0.5);
        let est = PopulationEstimator::new(EstimatorStrategy::MonteCarlo { n_mc: 512, seed: 2 }, &data, &act).unwrap();
        assert_eq!(est.v(&act, &[0.0; 4]), 0.0);
        assert_eq!(est.mean_y2(), 1.0);
    }

    #[test]
    fn identical_classes_give_zero_v() {
        let (data, act) = setup(0.0);
        let est = gh(&data, &act);
        let w = [0.3, -0.7, 0.2, 0.5];
        assert_eq!(est.v(&act, &w), 0.0);
        let mut g = [1.0; 4];
        est.grad_v(&act, &w, &mut g);
        assert_eq!(g, [0.0; 4]);
    }

    #[test]
    fn quadrature_u_is_bitwise_symmetric() {
        let (data, act) = setup(0.5);
        let est = gh(&data, &act);
        let w1 = [0.3, -0.7, 0.2, 0.5];
        let w2 = [-0.1, 0.4, 0.9, 0.0];
        assert_eq!(est.u(&act, &w1, &w2).to_bits(), est.u(&act, &w2, &w1).to_bits());
        assert!(est.u(&act, &w1, &w1) >= 0.0);
    }

    #[test]
    fn quadrature_agrees_with_large_sample() {
        let (data, act) = setup(0.5);
        let est = gh(&data, &act);
        let w1 = [0.6, -0.4, 0.3, 0.5];
        let w2 = [-0.2, 0.5, 0.7, 0.1];
        let n = 1_000_000;
        let mut rng = StreamRng::new(99, Purpose::Auxiliary, 0);
        let mut x = [0.0; 4];
        let (mut sv, mut sv2, mut su, mut su2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let y = data.sample(&mut rng, &mut x);
            let tv = -y * act.sigma(&x, &w1);
            let tu = act.sigma(&x, &w1) * act.sigma(&x, &w2);
            sv += tv;
            sv2 += tv * tv;
            su += tu;
            su2 += tu * tu;
        }
        let nf = n as f64;
        let (mv, mu) = (sv / nf, su / nf);
        let sd_v = (sv2 / nf - mv * mv).sqrt();
        let sd_u = (su2 / nf - mu * mu).sqrt();
        let tol_v = 4.0 * sd_v / 1e3;
        let tol_u = 4.0 * sd_u / 1e3;
        assert!((est.v(&act, &w1) - mv).abs() < tol_v, "{} vs {mv}", est.v(&act, &w1));
        assert!((est.u(&act, &w1, &w2) - mu).abs() < tol_u, "{} vs {mu}", est.u(&act, &w1, &w2));
    }

    fn fd_check(f: &dyn Fn(&[f64]) -> f64, w: &[f64], grad: &[f64]) {
        let h = 1e-6;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for k in 0..w.len() {
            let mut wp = w.to_vec();
            let mut wm = w.to_vec();
            wp[k] += h;
            wm[k] -= h;
            let fd = (f(&wp) - f(&wm)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-5 * scale.max(1e-3), "coord {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn quadrature_gradients_match_finite_differences() {
        let (data, act) = setup(0.5);
        let est = gh(&data, &act);
        let w1 = [0.61, -0.43, 0.37, 0.52];
        let w2 = [-0.23, 0.51, 0.71, 0.13];
        let mut g = [0.0; 4];
        est.grad_v(&act, &w1, &mut g);
        fd_check(&|w| est.v(&act, w), &w1, &g);
        est.grad1_u(&act, &w1, &w2, &mut g);
        fd_check(&|w| est.u(&act, w, &w2), &w1, &g);
        est.grad1_u(&act, &w2, &w1, &mut g);
        fd_check(&|w| est.u(&act, w, &w1), &w2, &g);
    }

    #[test]
    fn monte_carlo_gradients_match_finite_differences() {
        let (data, act) = setup(0.5);
        let est = PopulationEstimator::new(EstimatorStrategy::MonteCarlo { n_mc: 256, seed: 5 }, &data, &act).unwrap();
        let w1 = [0.61, -0.43, 0.37, 0.52];
        let w2 = [-0.23, 0.51, 0.71, 0.13];
        let mut g = [0.0; 4];
        est.grad_v(&act, &w1, &mut g);
        fd_check(&|w| est.v(&act, w), &w1, &g);
        est.grad1_u(&act, &w1, &w2, &mut g);
        fd_check(&|w| est.u(&act, w, &w2), &w1, &g);
    }

    #[test]
    fn analytic_agrees_with_quadrature_and_has_consistent_gradients() {
        let (data, act) = setup(0.5);
        let gh = PopulationEstimator::new(EstimatorStrategy::GaussHermite { n_nodes: 150 }, &data, &act).unwrap();
        let an = PopulationEstimator::new(EstimatorStrategy::Analytic { n_nodes: 24 }, &data, &act).unwrap();
        let w1 = [0.61, -0.43, 0.37, 0.52];
        let w2 = [-0.23, 0.51, 0.71, 0.13];
        // Gauss–Hermite on kinked integrands is good to a few digits only.
        assert!((an.v(&act, &w1) - gh.v(&act, &w1)).abs() < 5e-3);
        assert!((an.u(&act, &w1, &w2) - gh.u(&act, &w1, &w2)).abs() < 5e-3);
        assert_eq!(an.u(&act, &w1, &w2).to_bits(), an.u(&act, &w2, &w1).to_bits());
        let mut g = [0.0; 4];
        an.grad_v(&act, &w1, &mut g);
        fd_check(&|w| an.v(&act, w), &w1, &g);
        an.grad1_u(&act, &w1, &w2, &mut g);
        fd_check(&|w| an.u(&act, w, &w2), &w1, &g);
        an.grad1_u(&act, &w2, &w1, &mut g);
        fd_check(&|w| an.u(&act, w, &w1), &w2, &g);
        an.grad1_u(&act, &w1, &w1, &mut g);
        fd_check(&|w| an.u(&act, w, &w1), &w1, &g);
    }

    #[test]
    fn joint_pair_evaluation_matches_separate_calls() {
        let (data, act) = setup(0.5);
        let w1 = [0.61, -0.43, 0.37, 0.52];
        let w2 = [-0.23, 0.51, 0.71, 0.13];
        for strategy in [
            EstimatorStrategy::MonteCarlo { n_mc: 64, seed: 1 },
            EstimatorStrategy::GaussHermite { n_nodes: 11 },
            EstimatorStrategy::Analytic { n_nodes: 8 },
        ] {
            let est = PopulationEstimator::new(strategy, &data, &act).unwrap();
            for (a, b) in [(&w1, &w2), (&w2, &w1), (&w1, &w1)] {
                let (mut g1, mut g2, mut s1, mut s2) = ([0.0; 4], [0.0; 4], [0.0; 4], [0.0; 4]);
                let u = est.u_with_grads(&act, a, b, &mut g1, &mut g2);
                est.grad1_u(&act, a, b, &mut s1);
                est.grad1_u(&act, b, a, &mut s2);
                assert_eq!(u.to_bits(), est.u(&act, a, b).to_bits());
                assert_eq!((g1, g2), (s1, s2), "{strategy:?}");
            }
        }
    }

    #[test]
    fn rank_one_gradient_matches_one_sided_limit() {
        let (data, act) = setup(0.5);
        let est = gh(&data, &act);
        let w = [0.61, -0.43, 0.37, 0.52];
        let mut g = [0.0; 4];
        est.grad1_u(&act, &w, &w, &mut g);
        // Perturb w₂ slightly so the covariance is full rank.
        let w2 = [0.61 + 1e-4, -0.43, 0.37, 0.52];
        let mut g2 = [0.0; 4];
        est.grad1_u(&act, &w, &w2, &mut g2);
        for k in 0..4 {
            assert!((g[k] - g2[k]).abs() < 1e-2, "{:?} vs {:?}", g, g2);
        }
    }

    #[test]
    fn quadrature_refuses_non_mixture_data() {
        let (_, act) = setup(0.5);
        let emp = crate::model::EmpiricalDataset::new(4, vec![0.0; 4], vec![1.0]).unwrap();
        let err = PopulationEstimator::new(EstimatorStrategy::GaussHermite { n_nodes: 41 }, &emp, &act).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }
}
