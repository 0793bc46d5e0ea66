use alloc::vec::Vec;

use crate::dynamics::{run_dynamics, DynamicsConfig, DynamicsKind, Problem};
use crate::error::{Error, Result};
use crate::model::{pair_interaction_sums, risk_particles, Ensemble};

/// Raw and bias-corrected risk of one large ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRisk {
    pub raw: f64,
    pub corrected: f64,
}

/// `raw = R_N(θ)` and `corrected = raw − (α²/N)[mean_i U_ii − mean_{i≠j} U_ij]`,
/// the finite-N bias of the quadratic term for i.i.d. particles.
pub fn corrected_risk(ens: &Ensemble, p: &Problem) -> Result<ReferenceRisk> {
    let n = ens.len();
    if n < 2 {
        return Err(Error::config("the finite-N correction needs at least two particles"));
    }
    let raw = risk_particles(ens, p.estimator, p.activation, p.exec)?;
    let sums = pair_interaction_sums(ens, p.estimator, p.activation, p.exec)?;
    let nf = n as f64;
    let mean_diag = sums.diagonal / nf;
    let mean_off = (sums.total - sums.diagonal) / (nf * (nf - 1.0));
    let alpha = ens.scale();
    Ok(ReferenceRisk { raw, corrected: raw - alpha * alpha / nf * (mean_diag - mean_off) })
}

/// Large-N particle flow standing in for the mean-field law, cached at its
/// snapshot times.
#[derive(Debug, Clone)]
pub struct ReferenceFlow {
    n_ref: usize,
    times: Vec<f64>,
    risks: Vec<ReferenceRisk>,
}

impl ReferenceFlow {
    /// Integrates `ens` with `kind` (the deterministic or Langevin particle
    /// flow) and caches the risks at every snapshot.
    pub fn build(kind: DynamicsKind, ens: &Ensemble, cfg: &DynamicsConfig, p: &Problem) -> Result<Self> {
        if !matches!(kind, DynamicsKind::Pd | DynamicsKind::LangevinPd) {
            return Err(Error::config("the reference flow integrates pd or langevin_pd"));
        }
        let mut times = Vec::new();
        let mut risks = Vec::new();
        run_dynamics(kind, ens, cfg, p, &mut |_, t, state, _| {
            times.push(t);
            risks.push(corrected_risk(state, p)?);
            Ok(())
        })?;
        Ok(Self { n_ref: ens.len(), times, risks })
    }

    pub fn n_ref(&self) -> usize {
        self.n_ref
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Cached risk at `t`. Times must match a snapshot to 1e-9 relative;
    /// nothing is interpolated.
    pub fn reference_risk(&self, t: f64) -> Result<ReferenceRisk> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * s.abs().max(1.0))
            .map(|i| self.risks[i])
            .ok_or(Error::UncachedTime(t))
    }
}
