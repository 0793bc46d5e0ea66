use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::force::{drift_into, Layout};
use super::{DynamicsConfig, Problem};
use crate::error::{Error, Result};
use crate::math::{pairwise_sum_by, sqrt};
use crate::model::{grad_sigma_star, risk_particles, risk_population_mc, CoefficientMode, Ensemble};
use crate::rng::{Purpose, StreamRng};

/// Parameters beyond this magnitude count as divergence.
const DIVERGENCE_BOUND: f64 = 1e12;

/// Which trajectory to run. The plain kinds ignore `λ` and `τ`; the noisy
/// kinds use both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsKind {
    Sgd,
    NoisySgd,
    Gd,
    NoisyGd,
    Pd,
    LangevinPd,
}

impl DynamicsKind {
    pub const ALL: [DynamicsKind; 6] = [
        DynamicsKind::Sgd,
        DynamicsKind::NoisySgd,
        DynamicsKind::Gd,
        DynamicsKind::NoisyGd,
        DynamicsKind::Pd,
        DynamicsKind::LangevinPd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DynamicsKind::Sgd => "sgd",
            DynamicsKind::NoisySgd => "noisy_sgd",
            DynamicsKind::Gd => "gd",
            DynamicsKind::NoisyGd => "noisy_gd",
            DynamicsKind::Pd => "pd",
            DynamicsKind::LangevinPd => "langevin_pd",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self, DynamicsKind::NoisySgd | DynamicsKind::NoisyGd | DynamicsKind::LangevinPd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub time: f64,
    pub values: Vec<f64>,
}

/// Time-stamped rows with named value columns (`step` and `time` are implicit).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub columns: Vec<String>,
    pub rows: Vec<Snapshot>,
    pub warnings: Vec<String>,
}

impl TrajectoryRecord {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new(), warnings: Vec::new() }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.values[c]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.time).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: TrajectoryRecord,
    pub final_state: Ensemble,
}

#[derive(Debug, Clone)]
pub struct CoupledOutput {
    pub record: TrajectoryRecord,
    pub final_states: Vec<(DynamicsKind, Ensemble)>,
}

/// Advances one parameter buffer window by window.
struct Stepper<'a> {
    kind: DynamicsKind,
    cfg: DynamicsConfig,
    layout: Layout,
    p: Problem<'a>,
    m: u64,
    h: f64,
    data_rng: StreamRng,
    x: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    local_error: f64,
}

impl<'a> Stepper<'a> {
    fn new(kind: DynamicsKind, ens: &Ensemble, cfg: &DynamicsConfig, p: Problem<'a>) -> Result<Self> {
        cfg.validate()?;
        p.estimator.check(ens.dim_w())?;
        p.activation.check_dims(p.data.dim(), ens.dim_w())?;
        let m = cfg.substeps()?;
        let len = ens.params().len();
        let buf = |on: bool| if on { vec![0.0; len] } else { Vec::new() };
        let ode =
            matches!(kind, DynamicsKind::Gd | DynamicsKind::NoisyGd | DynamicsKind::Pd | DynamicsKind::LangevinPd);
        let rk = kind == DynamicsKind::Pd;
        Ok(Self {
            kind,
            cfg: *cfg,
            layout: Layout::of(ens),
            p,
            m,
            h: cfg.eps / m as f64,
            data_rng: StreamRng::new(cfg.seed, Purpose::Data, 0),
            x: vec![0.0; p.data.dim()],
            k1: buf(ode),
            k2: buf(rk),
            k3: buf(rk),
            k4: buf(rk),
            tmp: buf(rk),
            local_error: f64::NAN,
        })
    }

    fn lambda(&self) -> f64 {
        if self.kind.is_noisy() {
            self.cfg.lambda
        } else {
            0.0
        }
    }

    fn tau(&self) -> f64 {
        if self.kind.is_noisy() {
            self.cfg.tau
        } else {
            0.0
        }
    }

    /// Moves `params` from `kε` to `(k+1)ε`.
    fn advance(&mut self, k: u64, params: &mut [f64], check_error: bool) -> Result<()> {
        match self.kind {
            DynamicsKind::Sgd | DynamicsKind::NoisySgd => self.sgd_step(k, params),
            DynamicsKind::Gd | DynamicsKind::NoisyGd => self.gd_step(k, params),
            DynamicsKind::Pd => self.pd_window(k, params, check_error),
            DynamicsKind::LangevinPd => self.langevin_window(k, params),
        }
        check_finite(params, k + 1)
    }

    fn noise_amplitude(&self, t: f64) -> f64 {
        sqrt(4.0 * self.cfg.schedule.xi(t) * self.tau() / self.layout.dim() as f64)
    }

    fn sgd_step(&mut self, k: u64, params: &mut [f64]) {
        let t = k as f64 * self.cfg.eps;
        let s = self.cfg.eps * self.cfg.schedule.xi(t);
        let y = self.p.data.sample(&mut self.data_rng, &mut self.x);
        let act = self.p.activation;
        let layout = self.layout;
        let d = layout.dim();
        let n = params.len() / d;
        let x = &self.x;
        let alpha = layout.scale;
        let f = {
            let ps: &[f64] = params;
            pairwise_sum_by(n, &|i| (alpha * ps[i * d]) * act.sigma(x, &ps[i * d + 1..(i + 1) * d])) / n as f64
        };
        let step = 2.0 * s * (y - f);
        let shrink = 1.0 - 2.0 * self.lambda() * s;
        let ridge = self.lambda() != 0.0;
        let amp = self.noise_amplitude(t);
        let (seed, m, h) = (self.cfg.seed, self.m, self.h);
        let fixed = layout.mode == CoefficientMode::Fixed;
        self.p.exec.for_each_chunk(params, d, &|i, row| {
            let mut g = vec![0.0; d];
            grad_sigma_star(row, x, act, layout.mode, &mut g);
            let first = usize::from(fixed);
            if ridge {
                row[first..].iter_mut().for_each(|v| *v *= shrink);
            }
            for q in first..d {
                row[q] += step * g[q];
            }
            if amp != 0.0 {
                window_increment(seed, i as u64, k, m, h, &mut g);
                for q in first..d {
                    row[q] += amp * g[q];
                }
            }
        });
    }

    fn gd_step(&mut self, k: u64, params: &mut [f64]) {
        let t = k as f64 * self.cfg.eps;
        let s = self.cfg.eps * self.cfg.schedule.xi(t);
        drift_into(params, self.layout, &self.p, self.lambda(), &mut self.k1);
        let d = self.layout.dim();
        let first = usize::from(self.layout.mode == CoefficientMode::Fixed);
        let amp = self.noise_amplitude(t);
        let (seed, m, h) = (self.cfg.seed, self.m, self.h);
        let g = &self.k1;
        self.p.exec.for_each_chunk(params, d, &|i, row| {
            let gi = &g[i * d..(i + 1) * d];
            for q in first..d {
                row[q] += 2.0 * s * gi[q];
            }
            if amp != 0.0 {
                let mut dw = vec![0.0; d];
                window_increment(seed, i as u64, k, m, h, &mut dw);
                for q in first..d {
                    row[q] += amp * dw[q];
                }
            }
        });
    }

    /// One classical RK4 step of `dθ/dt = 2ξ(t) G(θ)` from `t` with step `h`.
    fn rk4_step(&mut self, t: f64, h: f64, params: &mut [f64]) {
        let lambda = self.lambda();
        let xi = |tt: f64| 2.0 * self.cfg.schedule.xi(tt);
        let (x1, x2, x4) = (xi(t), xi(t + 0.5 * h), xi(t + h));
        drift_into(params, self.layout, &self.p, lambda, &mut self.k1);
        for q in 0..params.len() {
            self.tmp[q] = params[q] + 0.5 * h * x1 * self.k1[q];
        }
        drift_into(&self.tmp, self.layout, &self.p, lambda, &mut self.k2);
        for q in 0..params.len() {
            self.tmp[q] = params[q] + 0.5 * h * x2 * self.k2[q];
        }
        drift_into(&self.tmp, self.layout, &self.p, lambda, &mut self.k3);
        for q in 0..params.len() {
            self.tmp[q] = params[q] + h * x2 * self.k3[q];
        }
        drift_into(&self.tmp, self.layout, &self.p, lambda, &mut self.k4);
        for q in 0..params.len() {
            params[q] += h / 6.0 * (x1 * self.k1[q] + 2.0 * x2 * (self.k2[q] + self.k3[q]) + x4 * self.k4[q]);
        }
    }

    fn pd_window(&mut self, k: u64, params: &mut [f64], check_error: bool) {
        let t0 = k as f64 * self.cfg.eps;
        if check_error {
            let mut full = params.to_vec();
            let mut half = params.to_vec();
            self.rk4_step(t0, self.h, &mut full);
            self.rk4_step(t0, 0.5 * self.h, &mut half);
            self.rk4_step(t0 + 0.5 * self.h, 0.5 * self.h, &mut half);
            // Richardson: the halved-step error is |full − half| / (2⁴ − 1).
            let diff = full.iter().zip(&half).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            self.local_error = diff / 15.0;
        }
        for j in 0..self.m {
            self.rk4_step(t0 + j as f64 * self.h, self.h, params);
        }
    }

    fn langevin_window(&mut self, k: u64, params: &mut [f64]) {
        let d = self.layout.dim();
        let first = usize::from(self.layout.mode == CoefficientMode::Fixed);
        let lambda = self.lambda();
        let seed = self.cfg.seed;
        let words = StreamRng::normal_words(d);
        for j in 0..self.m {
            let t = k as f64 * self.cfg.eps + j as f64 * self.h;
            let xi2 = 2.0 * self.cfg.schedule.xi(t);
            let amp = self.noise_amplitude(t) * sqrt(self.h);
            drift_into(params, self.layout, &self.p, lambda, &mut self.k1);
            let (g, h) = (&self.k1, self.h);
            let block = k * self.m + j;
            self.p.exec.for_each_chunk(params, d, &|i, row| {
                let gi = &g[i * d..(i + 1) * d];
                for q in first..d {
                    row[q] += h * xi2 * gi[q];
                }
                if amp != 0.0 {
                    let mut z = vec![0.0; d];
                    StreamRng::at_block(seed, Purpose::Brownian, i as u64, block, words).fill_normal(&mut z);
                    for q in first..d {
                        row[q] += amp * z[q];
                    }
                }
            });
        }
    }
}

/// `ΔW` over window `k`: the sum of the `m` fine increments `√h z` that the
/// Euler–Maruyama integrator uses, so window-level and fine-level dynamics
/// see the same Brownian path.
fn window_increment(seed: u64, particle: u64, k: u64, m: u64, h: f64, out: &mut [f64]) {
    let d = out.len();
    let words = StreamRng::normal_words(d);
    let mut rng = StreamRng::at_block(seed, Purpose::Brownian, particle, k * m, words);
    let mut z = vec![0.0; d];
    out.fill(0.0);
    let sh = sqrt(h);
    for _ in 0..m {
        rng.fill_normal(&mut z);
        for (o, zi) in out.iter_mut().zip(&z) {
            *o += sh * zi;
        }
    }
}

fn check_finite(params: &[f64], step: u64) -> Result<()> {
    if params.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_BOUND) {
        Ok(())
    } else {
        Err(Error::Diverged { step })
    }
}

/// Runs one dynamics, calling `observer(k, t, state)` at every snapshot
/// `k = 0, s, 2s, …` with `s = snapshot_every`. Returns the final state and
/// any integrator warnings.
pub fn run_dynamics(
    kind: DynamicsKind,
    ens: &Ensemble,
    cfg: &DynamicsConfig,
    p: &Problem,
    observer: &mut dyn FnMut(u64, f64, &Ensemble, f64) -> Result<()>,
) -> Result<(Ensemble, Vec<String>)> {
    let mut stepper = Stepper::new(kind, ens, cfg, *p)?;
    let layout = stepper.layout;
    let steps = cfg.steps();
    let every = cfg.snapshot_every;
    let mut params = ens.params().to_vec();
    let mut warnings = Vec::new();
    let mut pending_error = f64::NAN;
    observer(0, 0.0, ens, pending_error)?;
    for k in 0..steps {
        let check = kind == DynamicsKind::Pd && k % every == 0;
        stepper.advance(k, &mut params, check)?;
        if check {
            pending_error = stepper.local_error;
            if pending_error > cfg.ode_tol {
                warnings.push(format!(
                    "local error {:.3e} exceeds ode_tol {:.3e} at step {}",
                    pending_error, cfg.ode_tol, k
                ));
            }
        }
        if (k + 1) % every == 0 {
            let state = rebuild(&params, layout)?;
            observer(k + 1, (k + 1) as f64 * cfg.eps, &state, pending_error)?;
        }
    }
    Ok((rebuild(&params, layout)?, warnings))
}

fn rebuild(params: &[f64], layout: Layout) -> Result<Ensemble> {
    Ensemble::from_flat(layout.dim_w, params.to_vec(), layout.mode, layout.scale)
}

fn metrics(ens: &Ensemble, p: &Problem) -> Result<[f64; 4]> {
    let risk = risk_particles(ens, p.estimator, p.activation, p.exec)?;
    let risk_mc = match p.estimator.frozen() {
        Some(_) => risk_population_mc(ens, p.estimator, p.activation, p.exec)?,
        None => f64::NAN,
    };
    Ok([risk, risk_mc, ens.max_abs_a(), ens.mean_abs_a()])
}

fn single_run(kind: DynamicsKind, ens: &Ensemble, cfg: &DynamicsConfig, p: &Problem) -> Result<RunOutput> {
    let mut cols: Vec<String> =
        ["risk_particles", "risk_population_mc", "max_abs_a", "mean_abs_a"].iter().map(|s| String::from(*s)).collect();
    let pd = kind == DynamicsKind::Pd;
    if pd {
        cols.push("local_error".into());
    }
    let mut record = TrajectoryRecord::new(cols);
    let (final_state, warnings) = run_dynamics(kind, ens, cfg, p, &mut |k, t, state, err| {
        let mut values = metrics(state, p)?.to_vec();
        if pd {
            values.push(err);
        }
        record.rows.push(Snapshot { step: k, time: t, values });
        Ok(())
    })?;
    record.warnings = warnings;
    Ok(RunOutput { record, final_state })
}

/// One-pass SGD: `θ_i ← θ_i + 2s_k (y_k − f̂(x_k)) ∇σ⋆(x_k; θ_i)`.
pub fn sgd_run(ens: &Ensemble, cfg: &DynamicsConfig, p: &Problem) -> Result<RunOutput> {
    single_run(DynamicsKind::Sgd, ens, cfg, p)
}

/// SGD with ridge shrinkage `(1 − 2λs_k)` and Gaussian noise.
pub fn noisy_sgd_run(ens: &Ensemble, cfg: &DynamicsConfig, p: &Problem) -> Result<RunOutput> {
    single_run(DynamicsKind::NoisySgd, ens, cfg, p)
}

/// Full-batch GD on the frozen estimator: `θ_i ← θ_i + 2s_k G(θ_i)`.
pub fn gd_run(ens: &Ensemble, cfg: &DynamicsConfig, p: &Problem) -> Result<RunOutput> {
    single_run(DynamicsKind::Gd, ens, cfg, p)
}

pub fn noisy_gd_run(ens: &Ensemble, cfg: &DynamicsConfig, p: &Problem) -> Result<RunOutput> {
    single_run(DynamicsKind::NoisyGd, ens, cfg, p)
}

/// RK4 integration of the particle flow `dθ_i/dt = 2ξ(t) G(θ_i)`.
pub fn pd_integrate(ens: &Ensemble, cfg: &DynamicsConfig, p: &Problem) -> Result<RunOutput> {
    single_run(DynamicsKind::Pd, ens, cfg, p)
}

/// Euler–Maruyama for `dθ_i = 2ξ(t)G(θ_i) dt + √(4ξ(t)τ/D) dW_i`, where `G`
/// already carries the ridge term `−λθ_i`.
pub fn langevin_pd_run(ens: &Ensemble, cfg: &DynamicsConfig, p: &Problem) -> Result<RunOutput> {
    single_run(DynamicsKind::LangevinPd, ens, cfg, p)
}

/// Runs `kinds` in lockstep from the same initial ensemble. Noisy kinds share
/// Brownian streams; the SGD data stream is separate from everything else.
/// Per snapshot, records each dynamics' risk and max |a|, and for every pair
/// the sup particle gap and the absolute risk gap.
pub fn coupled_run(ens: &Ensemble, kinds: &[DynamicsKind], cfg: &DynamicsConfig, p: &Problem) -> Result<CoupledOutput> {
    if kinds.is_empty() {
        return Err(Error::config("coupled run needs at least one dynamics"));
    }
    for (a, ka) in kinds.iter().enumerate() {
        if kinds[a + 1..].contains(ka) {
            return Err(Error::config("coupled run lists a dynamics twice"));
        }
    }
    let mut steppers = kinds.iter().map(|k| Stepper::new(*k, ens, cfg, *p)).collect::<Result<Vec<_>>>()?;
    let layout = Layout::of(ens);
    let mut cols = Vec::new();
    for k in kinds {
        cols.push(format!("risk_{}", k.name()));
        cols.push(format!("max_abs_a_{}", k.name()));
    }
    let mut pairs = Vec::new();
    for a in 0..kinds.len() {
        for b in a + 1..kinds.len() {
            pairs.push((a, b));
            cols.push(format!("gap_{}_{}", kinds[a].name(), kinds[b].name()));
            cols.push(format!("risk_gap_{}_{}", kinds[a].name(), kinds[b].name()));
        }
    }
    let mut record = TrajectoryRecord::new(cols);
    let mut states: Vec<Vec<f64>> = kinds.iter().map(|_| ens.params().to_vec()).collect();

    let snapshot = |k: u64, states: &[Vec<f64>], record: &mut TrajectoryRecord| -> Result<()> {
        let ensembles = states.iter().map(|s| rebuild(s, layout)).collect::<Result<Vec<_>>>()?;
        let mut risks = Vec::with_capacity(kinds.len());
        let mut values = Vec::new();
        for e in &ensembles {
            let r = risk_particles(e, p.estimator, p.activation, p.exec)?;
            risks.push(r);
            values.push(r);
            values.push(e.max_abs_a());
        }
        for &(a, b) in &pairs {
            values.push(ensembles[a].max_particle_gap(&ensembles[b])?);
            values.push((risks[a] - risks[b]).abs());
        }
        record.rows.push(Snapshot { step: k, time: k as f64 * cfg.eps, values });
        Ok(())
    };

    snapshot(0, &states, &mut record)?;
    let every = cfg.snapshot_every;
    for k in 0..cfg.steps() {
        for (st, params) in steppers.iter_mut().zip(states.iter_mut()) {
            let check = st.kind == DynamicsKind::Pd && k % every == 0;
            st.advance(k, params, check)?;
            if check && st.local_error > cfg.ode_tol {
                record.warnings.push(format!("pd local error {:.3e} exceeds ode_tol at step {}", st.local_error, k));
            }
        }
        if (k + 1) % every == 0 {
            snapshot(k + 1, &states, &mut record)?;
        }
    }
    let final_states =
        kinds.iter().zip(&states).map(|(k, s)| Ok((*k, rebuild(s, layout)?))).collect::<Result<Vec<_>>>()?;
    Ok(CoupledOutput { record, final_states })
}
