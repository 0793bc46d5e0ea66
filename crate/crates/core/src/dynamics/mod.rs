//! The finite-N trajectories: one-pass SGD, noisy SGD, full-batch GD (plain
//! and noisy), the deterministic particle flow (RK4) and its Langevin
//! version (Euler–Maruyama), plus the harness that runs any subset of them
//! from a shared initialization with shared Brownian noise.
//!
//! Time is measured in `t = kε`. All six dynamics advance in lockstep over
//! windows `[kε, (k+1)ε)`; the ODE-based ones take `m = ε/h_ode` substeps
//! inside each window.
//!
//! Noise convention: a coordinate receives `√(4ξτ/D) dW`, so the stationary
//! law of the ridge-regularized dynamics with null potentials has variance
//! `τ/(λD)` per coordinate, matching the diffusion term `2ξτD⁻¹Δρ` of the
//! Fokker–Planck equation.

mod force;
mod init;
mod run;

use crate::error::{Error, Result};
use crate::math::Executor;
use crate::model::{Activation, DataModel, PopulationEstimator};

pub use force::drift;
pub use init::{init_sample, InitSpec};
pub use run::{
    coupled_run, gd_run, langevin_pd_run, noisy_gd_run, noisy_sgd_run, pd_integrate, run_dynamics, sgd_run,
    CoupledOutput, DynamicsKind, RunOutput, Snapshot, TrajectoryRecord,
};

/// Step-size profile `ξ(t)`; SGD uses `s_k = ε ξ(kε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `ξ(t) = c·e^{−rate·t}`: bounded by `c`, Lipschitz with constant `c·rate`.
    ExpDecay {
        c: f64,
        rate: f64,
    },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Constant(0.5)
    }
}

impl StepSchedule {
    pub fn xi(&self, t: f64) -> f64 {
        match *self {
            StepSchedule::Constant(c) => c,
            StepSchedule::ExpDecay { c, rate } => c * crate::math::exp(-rate * t),
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            StepSchedule::Constant(c) | StepSchedule::ExpDecay { c, .. } => c,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            StepSchedule::Constant(_) => 0.0,
            StepSchedule::ExpDecay { c, rate } => c * rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant(c) => c > 0.0 && c.is_finite(),
            StepSchedule::ExpDecay { c, rate } => c > 0.0 && c.is_finite() && rate >= 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("dynamics.schedule must be positive, bounded and Lipschitz"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    pub eps: f64,
    pub lambda: f64,
    pub tau: f64,
    pub horizon: f64,
    pub h_ode: f64,
    pub seed: u64,
    pub snapshot_every: u64,
    pub schedule: StepSchedule,
    /// Local-error tolerance for the once-per-snapshot step-halving check.
    pub ode_tol: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            eps: 1e-2,
            lambda: 0.0,
            tau: 0.0,
            horizon: 1.0,
            h_ode: 1e-2,
            seed: 0,
            snapshot_every: 1,
            schedule: StepSchedule::default(),
            ode_tol: 1e-8,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !pos(self.eps) {
            return Err(Error::config("dynamics.eps must be finite and > 0"));
        }
        if !nonneg(self.lambda) {
            return Err(Error::config("dynamics.lambda must be finite and ≥ 0"));
        }
        if !nonneg(self.tau) {
            return Err(Error::config("dynamics.tau must be finite and ≥ 0"));
        }
        if !pos(self.horizon) {
            return Err(Error::config("dynamics.T must be finite and > 0"));
        }
        if !pos(self.h_ode) || self.h_ode > self.eps * (1.0 + 1e-12) {
            return Err(Error::config("dynamics.h_ode must satisfy 0 < h_ode ≤ eps"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::config("io.snapshot_every must be ≥ 1"));
        }
        if !(self.ode_tol > 0.0) {
            return Err(Error::config("dynamics.ode_tol must be > 0"));
        }
        self.schedule.validate()?;
        self.substeps()?;
        Ok(())
    }

    /// `⌊T/ε⌋`, robust to `T/ε` landing a few ulps below an integer.
    pub fn steps(&self) -> u64 {
        let r = self.horizon / self.eps;
        libm::floor(r * (1.0 + 1e-12)) as u64
    }

    /// `m = ε/h_ode`, which must be an integer.
    pub fn substeps(&self) -> Result<u64> {
        let r = self.eps / self.h_ode;
        let m = libm::round(r);
        if m < 1.0 || (r - m).abs() > 1e-9 * r {
            return Err(Error::config("dynamics.eps / dynamics.h_ode must be an integer"));
        }
        Ok(m as u64)
    }

    pub fn noiseless(&self) -> bool {
        self.tau == 0.0 && self.lambda == 0.0
    }
}

/// Everything a dynamics needs besides the state: activation, data stream,
/// frozen estimator and the executor for per-particle work.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub activation: &'a dyn Activation,
    pub data: &'a dyn DataModel,
    pub estimator: &'a PopulationEstimator,
    pub exec: &'a dyn Executor,
}
