use alloc::vec;
use alloc::vec::Vec;

use super::Problem;
use crate::math::pairwise_sum_by;
use crate::model::{grad1_potential_u_theta, grad_potential_v_theta, pair_theta_grads, CoefficientMode, Ensemble};

/// Particles per executor chunk in force evaluations.
const PARTICLE_CHUNK: usize = 8;

/// Largest pair table (in f64s) the quadrature drift will allocate; above
/// it every ordered pair is evaluated separately.
const PAIR_TABLE_LIMIT: usize = 1 << 23;

/// Shape of a parameter buffer: what the integrators need besides the numbers.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub dim_w: usize,
    pub mode: CoefficientMode,
    pub scale: f64,
}

impl Layout {
    pub fn of(ens: &Ensemble) -> Self {
        Self { dim_w: ens.dim_w(), mode: ens.mode(), scale: ens.scale() }
    }

    pub fn dim(&self) -> usize {
        self.dim_w + 1
    }
}

/// `G(θ_i) = E[(y − f̂_α(x)) ∇_θσ⋆(x; θ_i)] − λθ_i` for every particle,
/// which equals `−∇V(θ_i) − (α/N) Σ_j ∇₁U(θ_i, θ_j) − λθ_i`.
/// In fixed mode the a-slot is 0 and the ridge acts on `w` only.
pub fn drift(ens: &Ensemble, p: &Problem, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; ens.params().len()];
    drift_into(ens.params(), Layout::of(ens), p, lambda, &mut out);
    out
}

pub(crate) fn drift_into(params: &[f64], layout: Layout, p: &Problem, lambda: f64, out: &mut [f64]) {
    let d = layout.dim();
    let n_part = params.len() / d;
    let act = p.activation;
    let alpha = layout.scale;
    let fixed = layout.mode == CoefficientMode::Fixed;
    match p.estimator.frozen() {
        Some(set) => {
            // Residuals on the frozen set, then per-particle averages.
            let n = set.len();
            let mut resid = vec![0.0; n];
            p.exec.for_each_chunk(&mut resid, 64, &|c, chunk| {
                for (k, r) in chunk.iter_mut().enumerate() {
                    let j = c * 64 + k;
                    let x = set.x(j);
                    let f = pairwise_sum_by(n_part, &|i| {
                        let row = &params[i * d..(i + 1) * d];
                        (alpha * row[0]) * act.sigma(x, &row[1..])
                    }) / n_part as f64;
                    *r = set.y(j) - f;
                }
            });
            let inv_n = 1.0 / n as f64;
            p.exec.for_each_chunk(out, PARTICLE_CHUNK * d, &|c, chunk| {
                for (k, g) in chunk.chunks_mut(d).enumerate() {
                    let i = c * PARTICLE_CHUNK + k;
                    let row = &params[i * d..(i + 1) * d];
                    let (a, w) = (row[0], &row[1..]);
                    g.fill(0.0);
                    let mut ga = 0.0;
                    for j in 0..n {
                        let r = resid[j];
                        ga += r * act.sigma_accumulate_grad(set.x(j), w, r * a, &mut g[1..]);
                    }
                    g[0] = if fixed { 0.0 } else { ga * inv_n - lambda * a };
                    for (gk, wk) in g[1..].iter_mut().zip(w) {
                        *gk = *gk * inv_n - lambda * wk;
                    }
                }
            });
        }
        None => {
            let est = p.estimator;
            let coef = alpha / n_part as f64;
            let finish = |ti: &[f64], g: &mut [f64], inter: &[f64]| {
                grad_potential_v_theta(ti, est, act, layout.mode, g);
                for q in 0..d {
                    g[q] = -g[q] - coef * inter[q];
                }
                if !fixed {
                    g[0] -= lambda * ti[0];
                }
                for q in 1..d {
                    g[q] -= lambda * ti[q];
                }
            };
            if n_part * n_part * 2 * d <= PAIR_TABLE_LIMIT {
                // Each unordered pair once: entry (i, j ≥ i) holds ∇₁U(θ_i, θ_j)
                // then ∇₁U(θ_j, θ_i). Entries below the diagonal stay unused.
                let width = 2 * d;
                let entry = |i: usize, j: usize| (i * n_part + j) * width;
                let mut table = vec![0.0; n_part * n_part * width];
                p.exec.for_each_chunk(&mut table, n_part * width, &|i, row| {
                    let ti = &params[i * d..(i + 1) * d];
                    for j in i..n_part {
                        let (gi, gj) = row[j * width..(j + 1) * width].split_at_mut(d);
                        pair_theta_grads(ti, &params[j * d..(j + 1) * d], est, act, layout.mode, gi, gj);
                    }
                });
                p.exec.for_each_chunk(out, PARTICLE_CHUNK * d, &|c, chunk| {
                    let mut inter = vec![0.0; d];
                    for (k, g) in chunk.chunks_mut(d).enumerate() {
                        let i = c * PARTICLE_CHUNK + k;
                        inter.fill(0.0);
                        for j in 0..n_part {
                            let o = if j >= i { entry(i, j) } else { entry(j, i) + d };
                            let v = &table[o..o + d];
                            crate::math::axpy(1.0, v, &mut inter);
                        }
                        finish(&params[i * d..(i + 1) * d], g, &inter);
                    }
                });
            } else {
                p.exec.for_each_chunk(out, PARTICLE_CHUNK * d, &|c, chunk| {
                    let mut tmp = vec![0.0; d];
                    let mut inter = vec![0.0; d];
                    for (k, g) in chunk.chunks_mut(d).enumerate() {
                        let i = c * PARTICLE_CHUNK + k;
                        let ti = &params[i * d..(i + 1) * d];
                        inter.fill(0.0);
                        for j in 0..n_part {
                            grad1_potential_u_theta(ti, &params[j * d..(j + 1) * d], est, act, layout.mode, &mut tmp);
                            crate::math::axpy(1.0, &tmp, &mut inter);
                        }
                        finish(ti, g, &inter);
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        grad1_potential_u_theta, grad_potential_v_theta, AnisotropicGaussians, EstimatorStrategy, Parameter,
        PopulationEstimator, Rotation, TruncatedReluDot,
    };
    use crate::Sequential;

    #[test]
    fn factorized_drift_matches_potential_form() {
        let data = AnisotropicGaussians::new(3, 0.5, 0.5, Rotation::Identity).unwrap();
        let act = TruncatedReluDot::new(-0.2, 1.0, -0.5, 0.7).unwrap();
        for strategy in [
            EstimatorStrategy::MonteCarlo { n_mc: 300, seed: 1 },
            EstimatorStrategy::GaussHermite { n_nodes: 9 },
            EstimatorStrategy::Analytic { n_nodes: 8 },
        ] {
            check_drift(strategy, &data, &act);
        }
    }

    fn check_drift(strategy: EstimatorStrategy, data: &AnisotropicGaussians, act: &TruncatedReluDot) {
        let est = PopulationEstimator::new(strategy, data, act).unwrap();
        let p = Problem { activation: act, data, estimator: &est, exec: &Sequential };
        let parts = [
            Parameter::new(0.7, vec![0.4, -0.2, 0.9]),
            Parameter::new(-1.2, vec![0.1, 0.5, -0.3]),
            Parameter::new(0.3, vec![-0.6, 0.2, 0.2]),
        ];
        for (mode, scale) in [(CoefficientMode::General, 2.0), (CoefficientMode::Fixed, 1.0)] {
            let parts: std::vec::Vec<Parameter> = parts
                .iter()
                .map(|q| Parameter::new(if mode == CoefficientMode::Fixed { 1.0 } else { q.a }, q.w.clone()))
                .collect();
            let ens = Ensemble::new(&parts, mode, scale).unwrap();
            let lambda = 0.3;
            let g = drift(&ens, &p, lambda);
            let d = ens.dim();
            let mut gv = vec![0.0; d];
            let mut gu = vec![0.0; d];
            for i in 0..ens.len() {
                let ti = ens.theta(i);
                grad_potential_v_theta(ti, &est, act, mode, &mut gv);
                let mut expect: std::vec::Vec<f64> = gv.iter().map(|v| -v).collect();
                for j in 0..ens.len() {
                    grad1_potential_u_theta(ti, ens.theta(j), &est, act, mode, &mut gu);
                    for q in 0..d {
                        expect[q] -= scale / ens.len() as f64 * gu[q];
                    }
                }
                for q in 0..d {
                    if !(q == 0 && mode == CoefficientMode::Fixed) {
                        expect[q] -= lambda * ti[q];
                    }
                    assert!((g[i * d + q] - expect[q]).abs() < 1e-13, "i={i} q={q}");
                }
            }
        }
    }
}
