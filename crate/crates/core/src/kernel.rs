//! The tangent kernel `H_ρ(x, z) = ∫⟨∇_θσ⋆(x;θ), ∇_θσ⋆(z;θ)⟩ρ(dθ)` of an
//! ensemble, the linearized residual dynamics `u*_t = e^{−Ht/n} y` on an
//! empirical dataset, its kernel-ridge-regression limit, and the α-rescaled
//! particle flow whose residuals approach the linearized ones as α grows.
//!
//! Norms over data points are root-mean-square (the `L²` norm of the
//! empirical measure).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::dynamics::{run_dynamics, DynamicsConfig, DynamicsKind, Problem, StepSchedule};
use crate::error::{check_dim, Error, Result};
use crate::math::{dot, exp, pairwise_sum_by, sqrt, Executor};
use crate::model::{
    grad_sigma_star, particle_order, predictions_on, Activation, EmpiricalDataset, Ensemble, FrozenSet,
    PopulationEstimator,
};
use crate::stats::{loglog_fit, LinearFit};

/// Relative jitter floor: `1e−10·trace(H)/n`. Eigenvalues at or below the
/// floor count as the kernel's null space.
pub const JITTER_FLOOR: f64 = 1e-10;
/// Largest relative jitter tried before the pseudo-inverse.
pub const JITTER_CEILING: f64 = 1e-6;

/// `∇_θσ⋆(x; θ_i)` for every particle, in canonical particle order.
fn features(ens: &Ensemble, x: &[f64], act: &dyn Activation, order: &[usize], out: &mut [f64]) {
    let d = ens.dim();
    for (slot, &i) in order.iter().enumerate() {
        grad_sigma_star(ens.theta(i), x, act, ens.mode(), &mut out[slot * d..(slot + 1) * d]);
    }
}

fn feature_table(ens: &Ensemble, set: &FrozenSet, act: &dyn Activation, exec: &dyn Executor) -> Vec<f64> {
    let stride = ens.len() * ens.dim();
    let order = particle_order(ens);
    let mut table = vec![0.0; set.len() * stride];
    exec.for_each_chunk(&mut table, stride, &|j, chunk| features(ens, set.x(j), act, &order, chunk));
    table
}

/// Average of per-particle inner products of two feature rows.
fn pair_value(fa: &[f64], fb: &[f64], n_part: usize, d: usize) -> f64 {
    pairwise_sum_by(n_part, &|i| dot(&fa[i * d..(i + 1) * d], &fb[i * d..(i + 1) * d])) / n_part as f64
}

/// `(1/N) Σ_i ⟨∇_θσ⋆(x; θ_i), ∇_θσ⋆(z; θ_i)⟩`. In fixed mode the a-slot of the
/// gradient is 0.
pub fn kernel_eval(ens: &Ensemble, x: &[f64], z: &[f64], act: &dyn Activation) -> Result<f64> {
    act.check_dims(x.len(), ens.dim_w())?;
    check_dim(x.len(), z.len())?;
    let order = particle_order(ens);
    let stride = ens.len() * ens.dim();
    let (mut fx, mut fz) = (vec![0.0; stride], vec![0.0; stride]);
    features(ens, x, act, &order, &mut fx);
    features(ens, z, act, &order, &mut fz);
    Ok(pair_value(&fx, &fz, ens.len(), ens.dim()))
}

/// Gram matrix `H_jk = H_ρ(x_j, x_k)` on the data points. The upper triangle
/// is computed and mirrored, so symmetry is exact.
pub fn kernel_matrix(
    ens: &Ensemble,
    data: &FrozenSet,
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Result<KernelMatrix> {
    act.check_dims(data.dim(), ens.dim_w())?;
    let n = data.len();
    let (n_part, d) = (ens.len(), ens.dim());
    let stride = n_part * d;
    let table = feature_table(ens, data, act, exec);
    let mut h = vec![0.0; n * n];
    exec.for_each_chunk(&mut h, n, &|j, row| {
        let fj = &table[j * stride..(j + 1) * stride];
        for k in j..n {
            row[k] = pair_value(fj, &table[k * stride..(k + 1) * stride], n_part, d);
        }
    });
    for j in 0..n {
        for k in 0..j {
            h[j * n + k] = h[k * n + j];
        }
    }
    KernelMatrix::from_row_major(n, h)
}

/// `h(z) = [H_ρ(z, x_1), …, H_ρ(z, x_n)]`, evaluated with the same arithmetic
/// as [`kernel_matrix`], so `h(x_j)` reproduces row `j` bit for bit.
pub fn h_vector(
    ens: &Ensemble,
    z: &[f64],
    data: &FrozenSet,
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Result<Vec<f64>> {
    act.check_dims(data.dim(), ens.dim_w())?;
    check_dim(data.dim(), z.len())?;
    let (n_part, d) = (ens.len(), ens.dim());
    let stride = n_part * d;
    let table = feature_table(ens, data, act, exec);
    let order = particle_order(ens);
    let mut fz = vec![0.0; stride];
    features(ens, z, act, &order, &mut fz);
    let mut out = vec![0.0; data.len()];
    exec.for_each_chunk(&mut out, 1, &|k, o| {
        o[0] = pair_value(&table[k * stride..(k + 1) * stride], &fz, n_part, d);
    });
    Ok(out)
}

/// Symmetric `n×n` kernel matrix with its eigendecomposition cached.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    h: DMatrix<f64>,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl KernelMatrix {
    /// Takes ownership of a row-major matrix, which must be exactly symmetric.
    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("kernel matrix needs n ≥ 1"));
        }
        check_dim(n * n, entries.len())?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearAlgebra("kernel matrix has non-finite entries".into()));
        }
        for j in 0..n {
            for k in 0..j {
                if entries[j * n + k] != entries[k * n + j] {
                    return Err(Error::LinearAlgebra("kernel matrix is not symmetric".into()));
                }
            }
        }
        let h = DMatrix::from_row_slice(n, n, &entries);
        let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::LinearAlgebra("symmetric eigensolver did not converge".into()))?;
        Ok(Self { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors, h })
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.h[(j, k)]
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.h.row(j).iter().copied().collect()
    }

    /// Eigenvalues in the solver's order (not sorted).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn trace(&self) -> f64 {
        self.h.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// PSD up to the `−1e−10·max|λ|` roundoff slack.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -1e-10 * self.max_abs_eigenvalue()
    }

    /// Absolute jitter floor `1e−10·trace(H)/n`.
    pub fn jitter_floor(&self) -> f64 {
        JITTER_FLOOR * self.trace() / self.n() as f64
    }

    /// Number of eigenvalues at or below the jitter floor.
    pub fn null_space_dim(&self) -> usize {
        let floor = self.jitter_floor();
        self.values.iter().filter(|&&v| v <= floor).count()
    }

    /// `Σ_k φ(λ_k) q_k (q_kᵀ y)` for a spectral function `φ`.
    fn spectral_apply(&self, y: &[f64], phi: impl Fn(f64) -> f64) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        let coeffs = self.vectors.tr_mul(&y);
        let scaled = DVector::from_iterator(self.n(), coeffs.iter().zip(&self.values).map(|(c, &l)| c * phi(l)));
        (&self.vectors * scaled).iter().copied().collect()
    }
}

/// `u*_t = e^{−Ht/n} y` through the cached eigendecomposition; `t = 0`
/// returns `y` unchanged.
pub fn linearized_residual(h: &KernelMatrix, y: &[f64], t: f64) -> Result<Vec<f64>> {
    check_dim(h.n(), y.len())?;
    if t == 0.0 {
        return Ok(y.to_vec());
    }
    let n = h.n() as f64;
    Ok(h.spectral_apply(y, |l| exp(-l * t / n)))
}

/// `∫₀ᵗ e^{−λs/n} ds / n = (1 − e^{−λt/n})/λ`, continuous through `λ = 0`.
fn integrated_decay(l: f64, t: f64, n: f64) -> f64 {
    let x = l * t / n;
    if x.abs() < 1e-8 {
        t / n * (1.0 - 0.5 * x)
    } else {
        -libm::expm1(-x) / l
    }
}

/// Linearized prediction `f̂_t(z) = h(z)ᵀ H⁻¹(I − e^{−Ht/n}) y`, which solves
/// `∂_t f̂_t(z) = h(z)ᵀ u*_t / n` from `f̂_0 = 0`. Well defined for singular
/// `H` (null directions contribute `t/n`).
pub fn linearized_prediction(h: &KernelMatrix, hz: &[f64], y: &[f64], t: f64) -> Result<f64> {
    check_dim(h.n(), y.len())?;
    check_dim(h.n(), hz.len())?;
    let n = h.n() as f64;
    let c = h.spectral_apply(y, |l| integrated_decay(l, t, n));
    Ok(dot(hz, &c))
}

/// How `H c = y` was solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KrrMethod {
    /// Plain Cholesky; `H` was comfortably invertible.
    Exact,
    /// Cholesky of `H + jitter·I`.
    Jittered(f64),
    /// Spectral pseudo-inverse dropping eigenvalues at or below the floor.
    PseudoInverse,
}

impl KrrMethod {
    /// Set whenever `H` had to be regularized.
    pub fn flagged(&self) -> bool {
        !matches!(self, KrrMethod::Exact)
    }

    pub fn name(&self) -> &'static str {
        match self {
            KrrMethod::Exact => "exact",
            KrrMethod::Jittered(_) => "jittered",
            KrrMethod::PseudoInverse => "pseudo_inverse",
        }
    }
}

/// Coefficients `c = H⁻¹ y` of the kernel-ridge-regression limit.
#[derive(Debug, Clone)]
pub struct KrrFit {
    pub coef: Vec<f64>,
    pub method: KrrMethod,
}

impl KrrFit {
    /// Solves `H c = y`. `H` is factorized as is when its smallest eigenvalue
    /// clears the floor; otherwise the jitter starts at the floor and grows
    /// ×10 up to the ceiling, and the pseudo-inverse is the last resort.
    pub fn new(h: &KernelMatrix, y: &[f64]) -> Result<Self> {
        check_dim(h.n(), y.len())?;
        let floor = h.jitter_floor();
        let rhs = DVector::from_column_slice(y);
        let solve = |jitter: f64| -> Option<Vec<f64>> {
            let mut m = h.h.clone();
            for k in 0..h.n() {
                m[(k, k)] += jitter;
            }
            Cholesky::new(m).map(|c| c.solve(&rhs).iter().copied().collect())
        };
        if h.min_eigenvalue() > floor {
            if let Some(coef) = solve(0.0) {
                return Ok(Self { coef, method: KrrMethod::Exact });
            }
        }
        let mut jitter = floor;
        while jitter <= JITTER_CEILING / JITTER_FLOOR * floor * (1.0 + 1e-9) {
            if let Some(coef) = solve(jitter) {
                return Ok(Self { coef, method: KrrMethod::Jittered(jitter) });
            }
            jitter *= 10.0;
        }
        let coef = h.spectral_apply(y, |l| if l > floor { 1.0 / l } else { 0.0 });
        Ok(Self { coef, method: KrrMethod::PseudoInverse })
    }

    pub fn predict(&self, hz: &[f64]) -> Result<f64> {
        check_dim(self.coef.len(), hz.len())?;
        Ok(dot(hz, &self.coef))
    }
}

/// `h(z)ᵀ H⁻¹ y` with `H`, `h` built from the initial ensemble on the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrrPrediction {
    pub value: f64,
    pub method: KrrMethod,
}

pub fn krr_limit_predict(
    ens0: &Ensemble,
    data: &EmpiricalDataset,
    z: &[f64],
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Result<KrrPrediction> {
    let h = kernel_matrix(ens0, data.points(), act, exec)?;
    let fit = KrrFit::new(&h, data.ys())?;
    let hz = h_vector(ens0, z, data.points(), act, exec)?;
    Ok(KrrPrediction { value: fit.predict(&hz)?, method: fit.method })
}

/// Integration settings of the rescaled flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledFlowConfig {
    pub horizon: f64,
    /// Snapshot spacing; a multiple of `h_ode`.
    pub eps: f64,
    pub h_ode: f64,
    pub ode_tol: f64,
}

impl Default for RescaledFlowConfig {
    fn default() -> Self {
        Self { horizon: 4.0, eps: 0.25, h_ode: 0.05, ode_tol: 1e-6 }
    }
}

/// Residuals `u^α_t(x_j) = y_j − f̂_α(x_j; ρ^α_t)` at each snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledFlow {
    pub alpha: f64,
    pub times: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl RescaledFlow {
    /// Empirical risk `mean_j u_j²` at each snapshot.
    pub fn risks(&self) -> Vec<f64> {
        self.residuals.iter().map(|u| mean_sq(u)).collect()
    }
}

fn mean_sq(u: &[f64]) -> f64 {
    pairwise_sum_by(u.len(), &|j| u[j] * u[j]) / u.len() as f64
}

fn empirical_problem<'a>(
    data: &'a EmpiricalDataset,
    act: &'a dyn Activation,
    est: &'a PopulationEstimator,
    exec: &'a dyn Executor,
) -> Problem<'a> {
    Problem { activation: act, data, estimator: est, exec }
}

/// RK4 on `dθ_i/dt = (1/α) E_x[(y − f̂_α(x)) ∇_θσ⋆(x; θ_i)]` over the
/// empirical measure, with the ensemble's scale set to `α`. This is the
/// particle flow with `ξ = 1/(2α)` and no ridge or noise.
pub fn rescaled_flow(
    ens: &Ensemble,
    alpha: f64,
    cfg: &RescaledFlowConfig,
    data: &EmpiricalDataset,
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Result<RescaledFlow> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config("kernel.alpha must be finite and > 0"));
    }
    let est = PopulationEstimator::from_frozen(data.points().clone());
    let p = empirical_problem(data, act, &est, exec);
    let dyn_cfg = DynamicsConfig {
        eps: cfg.eps,
        lambda: 0.0,
        tau: 0.0,
        horizon: cfg.horizon,
        h_ode: cfg.h_ode,
        seed: 0,
        snapshot_every: 1,
        schedule: StepSchedule::Constant(0.5 / alpha),
        ode_tol: cfg.ode_tol,
    };
    let start = ens.clone().with_scale(alpha)?;
    let set = data.points();
    let mut times = Vec::new();
    let mut residuals = Vec::new();
    let (_, warnings) = run_dynamics(DynamicsKind::Pd, &start, &dyn_cfg, &p, &mut |_, t, state, _| {
        let f = predictions_on(state, set, act, exec);
        times.push(t);
        residuals.push(set.ys().iter().zip(&f).map(|(y, f)| y - f).collect());
        Ok(())
    })?;
    Ok(RescaledFlow { alpha, times, residuals, warnings })
}

/// One snapshot of the crossover study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverRow {
    pub alpha: f64,
    pub t: f64,
    /// RMS over the data points of `u^α_t − u*_t`.
    pub gap_l2: f64,
    pub risk_alpha: f64,
    pub risk_linearized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverReport {
    pub rows: Vec<CrossoverRow>,
    pub alphas: Vec<f64>,
    /// `sup_{t ≤ T} ‖u^α_t − u*_t‖` per α.
    pub sup_gap: Vec<f64>,
    /// Same supremum restricted to `t ≤ T/2`.
    pub sup_gap_half: Vec<f64>,
    /// Log-log fit of `sup_gap` against α.
    pub fit: LinearFit,
    /// RMS of the targets.
    pub y_rms: f64,
    /// Initial risk, the measured `B`.
    pub initial_risk: f64,
    pub min_eigenvalue: f64,
    pub warnings: Vec<String>,
}

/// Runs the rescaled flow for every α from the same initial ensemble and
/// compares its residuals with `e^{−Ht/n} y`, `H` built from that ensemble.
pub fn kernel_crossover_experiment(
    ens0: &Ensemble,
    alphas: &[f64],
    cfg: &RescaledFlowConfig,
    data: &EmpiricalDataset,
    act: &dyn Activation,
    exec: &dyn Executor,
) -> Result<CrossoverReport> {
    if alphas.len() < 2 {
        return Err(Error::config("kernel.alpha_grid needs at least two values"));
    }
    let h = kernel_matrix(ens0, data.points(), act, exec)?;
    let y = data.ys();
    let mut rows = Vec::new();
    let mut sup_gap = Vec::with_capacity(alphas.len());
    let mut sup_gap_half = Vec::with_capacity(alphas.len());
    let mut warnings = Vec::new();
    let mut initial_risk = f64::NAN;
    for &alpha in alphas {
        let flow = rescaled_flow(ens0, alpha, cfg, data, act, exec)?;
        warnings.extend(flow.warnings.iter().map(|w| alloc::format!("alpha={alpha}: {w}")));
        let (mut sup, mut sup_half) = (0.0f64, 0.0f64);
        for (t, u) in flow.times.iter().zip(&flow.residuals) {
            let lin = linearized_residual(&h, y, *t)?;
            let diff: Vec<f64> = u.iter().zip(&lin).map(|(a, b)| a - b).collect();
            let gap = sqrt(mean_sq(&diff));
            sup = sup.max(gap);
            if *t <= 0.5 * cfg.horizon * (1.0 + 1e-12) {
                sup_half = sup_half.max(gap);
            }
            rows.push(CrossoverRow {
                alpha,
                t: *t,
                gap_l2: gap,
                risk_alpha: mean_sq(u),
                risk_linearized: mean_sq(&lin),
            });
        }
        if initial_risk.is_nan() {
            initial_risk = mean_sq(&flow.residuals[0]);
        }
        sup_gap.push(sup);
        sup_gap_half.push(sup_half);
    }
    let fit = loglog_fit(alphas, &sup_gap)?;
    Ok(CrossoverReport {
        rows,
        alphas: alphas.to_vec(),
        sup_gap,
        sup_gap_half,
        fit,
        y_rms: sqrt(mean_sq(y)),
        initial_risk,
        min_eigenvalue: h.min_eigenvalue(),
        warnings,
    })
}
