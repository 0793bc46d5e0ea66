//! Potentials lifted to parameters and the risk functionals.
//!
//! Parameter rows are `θ = [a, w..]`. Reductions over particles run in
//! [`particle_order`], so risks are exactly invariant under relabelling.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::activation::Activation;
use super::data::FrozenSet;
use super::ensemble::{CoefficientMode, Ensemble};
use super::estimator::PopulationEstimator;
use crate::error::{check_dim, Error, Result};
use crate::math::{pairwise_sum_by, Executor};

/// Work items per executor chunk when looping over frozen points.
pub(crate) const POINT_CHUNK: usize = 64;

/// `σ⋆(x; θ) = a σ(x; w)`.
pub fn sigma_star(theta: &[f64], x: &[f64], act: &dyn Activation) -> f64 {
    theta[0] * act.sigma(x, &theta[1..])
}

/// `∇_θ σ⋆ = (σ, a ∇_w σ)`; the a-slot is 0 in fixed mode.
pub fn grad_sigma_star(theta: &[f64], x: &[f64], act: &dyn Activation, mode: CoefficientMode, out: &mut [f64]) {
    out.fill(0.0);
    let s = act.sigma_accumulate_grad(x, &theta[1..], theta[0], &mut out[1..]);
    out[0] = match mode {
        CoefficientMode::General => s,
        CoefficientMode::Fixed => 0.0,
    };
}

/// `V(θ) = a v(w)`.
pub fn potential_v_theta(theta: &[f64], est: &PopulationEstimator, act: &dyn Activation) -> f64 {
    theta[0] * est.v(act, &theta[1..])
}

/// `U(θ₁, θ₂) = a₁ a₂ u(w₁, w₂)`.
pub fn potential_u_theta(t1: &[f64], t2: &[f64], est: &PopulationEstimator, act: &dyn Activation) -> f64 {
    t1[0] * t2[0] * est.u(act, &t1[1..], &t2[1..])
}

/// `∇V(θ) = (v(w), a ∇v(w))`.
pub fn grad_potential_v_theta(
    theta: &[f64],
    est: &PopulationEstimator,
    act: &dyn Activation,
    mode: CoefficientMode,
    out: &mut [f64],
) {
    est.grad_v(act, &theta[1..], &mut out[1..]);
    let a = theta[0];
    out[1..].iter_mut().for_each(|g| *g *= a);
    out[0] = match mode {
        CoefficientMode::General => est.v(act, &theta[1..]),
        CoefficientMode::Fixed => 0.0,
    };
}

/// `∇₁U(θ₁, θ₂) = (a₂ u(w₁, w₂), a₁ a₂ ∇₁u(w₁, w₂))`.
pub fn grad1_potential_u_theta(
    t1: &[f64],
    t2: &[f64],
    est: &PopulationEstimator,
    act: &dyn Activation,
    mode: CoefficientMode,
    out: &mut [f64],
) {
    est.grad1_u(act, &t1[1..], &t2[1..], &mut out[1..]);
    let aa = t1[0] * t2[0];
    out[1..].iter_mut().for_each(|g| *g *= aa);
    out[0] = match mode {
        CoefficientMode::General => t2[0] * est.u(act, &t1[1..], &t2[1..]),
        CoefficientMode::Fixed => 0.0,
    };
}

/// `∇₁U(θ₁, θ₂)` into `g1` and `∇₁U(θ₂, θ₁)` into `g2` from one joint
/// evaluation; bitwise equal to two [`grad1_potential_u_theta`] calls.
pub fn pair_theta_grads(
    t1: &[f64],
    t2: &[f64],
    est: &PopulationEstimator,
    act: &dyn Activation,
    mode: CoefficientMode,
    g1: &mut [f64],
    g2: &mut [f64],
) {
    let u = est.u_with_grads(act, &t1[1..], &t2[1..], &mut g1[1..], &mut g2[1..]);
    let aa = t1[0] * t2[0];
    g1[1..].iter_mut().for_each(|g| *g *= aa);
    g2[1..].iter_mut().for_each(|g| *g *= aa);
    let (a1, a2) = match mode {
        CoefficientMode::General => (t2[0] * u, t1[0] * u),
        CoefficientMode::Fixed => (0.0, 0.0),
    };
    g1[0] = a1;
    g2[0] = a2;
}

/// Canonical particle order: lexicographic in `w`, then in `a`. Antithetic
/// pairs `(±a, w)` stay adjacent, so their contributions cancel exactly.
pub fn particle_order(ens: &Ensemble) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ens.len()).collect();
    idx.sort_by(|&i, &j| {
        for (x, y) in ens.w(i).iter().zip(ens.w(j)) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        ens.a(i).total_cmp(&ens.a(j))
    });
    idx
}

/// `f̂_{α,N}(x) = (1/N) Σ_i (α a_i) σ(x; w_i)`, summed in storage order.
pub fn predict(ens: &Ensemble, x: &[f64], act: &dyn Activation) -> f64 {
    let alpha = ens.scale();
    pairwise_sum_by(ens.len(), &|i| (alpha * ens.a(i)) * act.sigma(x, ens.w(i))) / ens.len() as f64
}

fn predict_in_order(ens: &Ensemble, order: &[usize], x: &[f64], act: &dyn Activation) -> f64 {
    let alpha = ens.scale();
    pairwise_sum_by(order.len(), &|k| {
        let i = order[k];
        (alpha * ens.a(i)) * act.sigma(x, ens.w(i))
    }) / ens.len() as f64
}

/// Predictions at every point of `set`, summed in storage order.
pub fn predictions_on(ens: &Ensemble, set: &FrozenSet, act: &dyn Activation, exec: &dyn Executor) -> Vec<f64> {
    let mut out = vec![0.0; set.len()];
    exec.for_each_chunk(&mut out, POINT_CHUNK, &|c, chunk| {
        for (k, o) in chunk.iter_mut().enumerate() {
            *o = predict(ens, set.x(c * POINT_CHUNK + k), act);
        }
    });
    out
}

fn predictions_canonical(
    ens: &Ensemble,
    order: &[usize],
    set: &FrozenSet,
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Vec<f64> {
    let mut out = vec![0.0; set.len()];
    exec.for_each_chunk(&mut out, POINT_CHUNK, &|c, chunk| {
        for (k, o) in chunk.iter_mut().enumerate() {
            *o = predict_in_order(ens, order, set.x(c * POINT_CHUNK + k), act);
        }
    });
    out
}

/// `Σ_i U(θ_i, θ_i)` and `Σ_i Σ_j U(θ_i, θ_j)`, without the `α` or `1/N`
/// factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSums {
    pub diagonal: f64,
    pub total: f64,
}

/// Pair sums of the interaction. On a frozen sample the double sum
/// factorizes as `(1/n) Σ_j (Σ_i a_i σ_ij)²`, which is `O(N n)` rather than
/// `O(N² n)`.
pub fn pair_interaction_sums(
    ens: &Ensemble,
    est: &PopulationEstimator,
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Result<PairSums> {
    est.check(ens.dim_w())?;
    let order = particle_order(ens);
    if let Some(set) = est.frozen() {
        let n = set.len();
        let mut per_point = vec![0.0; 2 * n];
        exec.for_each_chunk(&mut per_point, 2 * POINT_CHUNK, &|c, chunk| {
            for (k, o) in chunk.chunks_mut(2).enumerate() {
                let x = set.x(c * POINT_CHUNK + k);
                let mut diag_terms = vec![0.0; order.len()];
                let lin = pairwise_sum_by(order.len(), &|m| {
                    let i = order[m];
                    ens.a(i) * act.sigma(x, ens.w(i))
                });
                for (m, &i) in order.iter().enumerate() {
                    let s = ens.a(i) * act.sigma(x, ens.w(i));
                    diag_terms[m] = s * s;
                }
                o[0] = crate::math::pairwise_sum(&diag_terms);
                o[1] = lin * lin;
            }
        });
        let nf = n as f64;
        Ok(PairSums {
            diagonal: pairwise_sum_by(n, &|j| per_point[2 * j]) / nf,
            total: pairwise_sum_by(n, &|j| per_point[2 * j + 1]) / nf,
        })
    } else {
        let nn = order.len();
        if nn * nn > U_TABLE_LIMIT {
            let rows = crate::math::map_indices(exec, nn, &|m| {
                let ti = ens.theta(order[m]);
                pairwise_sum_by(nn, &|l| potential_u_theta(ti, ens.theta(order[l]), est, act))
            });
            let diagonal = pairwise_sum_by(nn, &|m| {
                let t = ens.theta(order[m]);
                potential_u_theta(t, t, est, act)
            });
            return Ok(PairSums { diagonal, total: crate::math::pairwise_sum(&rows) });
        }
        // U is bitwise symmetric, so the upper triangle determines the table.
        let mut table = vec![0.0; nn * nn];
        exec.for_each_chunk(&mut table, nn, &|m, row| {
            let ti = ens.theta(order[m]);
            for l in m..nn {
                row[l] = potential_u_theta(ti, ens.theta(order[l]), est, act);
            }
        });
        let at = |m: usize, l: usize| if l >= m { table[m * nn + l] } else { table[l * nn + m] };
        let rows: Vec<f64> = (0..nn).map(|m| pairwise_sum_by(nn, &|l| at(m, l))).collect();
        let diagonal = pairwise_sum_by(nn, &|m| at(m, m));
        Ok(PairSums { diagonal, total: crate::math::pairwise_sum(&rows) })
    }
}

/// Largest `N²` for which the quadrature risk tabulates `U` once per pair.
const U_TABLE_LIMIT: usize = 1 << 22;

/// `R_N = E y² + (2α/N) Σ_i V(θ_i) + (α²/N²) Σ_{i,j} U(θ_i, θ_j)`.
pub fn risk_particles(
    ens: &Ensemble,
    est: &PopulationEstimator,
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Result<f64> {
    est.check(ens.dim_w())?;
    let order = particle_order(ens);
    let n_part = ens.len() as f64;
    let alpha = ens.scale();
    let v = crate::math::map_indices(exec, order.len(), &|m| {
        let i = order[m];
        (alpha * ens.a(i)) * est.v(act, ens.w(i))
    });
    let linear = 2.0 * crate::math::pairwise_sum(&v) / n_part;
    let quadratic = match est.frozen() {
        // (α²/N²) ΣΣ U = mean_j f̂_j².
        Some(set) => {
            let f = predictions_canonical(ens, &order, set, act, exec);
            pairwise_sum_by(f.len(), &|j| f[j] * f[j]) / f.len() as f64
        }
        None => {
            let sums = pair_interaction_sums(ens, est, act, exec)?;
            alpha * alpha * sums.total / (n_part * n_part)
        }
    };
    Ok(est.mean_y2() + linear + quadratic)
}

/// `(1/n) Σ_j (y_j − f̂(x_j))²` on the frozen sample.
pub fn risk_population_mc(
    ens: &Ensemble,
    est: &PopulationEstimator,
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Result<f64> {
    let set =
        est.frozen().ok_or_else(|| Error::unsupported("the squared-residual risk needs a Monte Carlo estimator"))?;
    check_dim(set.dim(), ens.dim_w())?;
    let order = particle_order(ens);
    let f = predictions_canonical(ens, &order, set, act, exec);
    Ok(pairwise_sum_by(f.len(), &|j| {
        let r = set.y(j) - f[j];
        r * r
    }) / f.len() as f64)
}
