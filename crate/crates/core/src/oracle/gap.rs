use alloc::vec::Vec;

use super::reference::ReferenceFlow;
use crate::dynamics::{run_dynamics, DynamicsConfig, DynamicsKind, Problem};
use crate::error::{Error, Result};
use crate::model::{risk_particles, Ensemble};
use crate::stats::{loglog_fit, median, LinearFit};

/// Risk of one finite-N run next to the reference risk at the same times.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTrace {
    pub n: usize,
    pub times: Vec<f64>,
    pub risk: Vec<f64>,
    pub reference: Vec<f64>,
}

impl GapTrace {
    /// `|R_N(t) − R_ref(t)|` per snapshot.
    pub fn gaps(&self) -> Vec<f64> {
        self.risk.iter().zip(&self.reference).map(|(r, q)| (r - q).abs()).collect()
    }

    pub fn sup_gap(&self) -> f64 {
        self.gaps().into_iter().fold(0.0, f64::max)
    }
}

/// Runs `kind` from `ens` and compares its risk with the bias-corrected
/// reference risk at every snapshot. The reference must be strictly larger
/// than the run, and must be cached at every snapshot time of `cfg`.
pub fn risk_gap_trace(
    kind: DynamicsKind,
    reference: &ReferenceFlow,
    ens: &Ensemble,
    cfg: &DynamicsConfig,
    p: &Problem,
) -> Result<GapTrace> {
    if ens.len() >= reference.n_ref() {
        return Err(Error::config("gap study needs N < N_ref: the reference must dominate"));
    }
    let mut trace = GapTrace { n: ens.len(), times: Vec::new(), risk: Vec::new(), reference: Vec::new() };
    run_dynamics(kind, ens, cfg, p, &mut |_, t, state, _| {
        let r_ref = reference.reference_risk(t)?;
        trace.times.push(t);
        trace.risk.push(risk_particles(state, p.estimator, p.activation, p.exec)?);
        trace.reference.push(r_ref.corrected);
        Ok(())
    })?;
    Ok(trace)
}

/// Median sup-gap per `N` and the log-log slope across `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapStudySummary {
    pub ns: Vec<usize>,
    pub median_gap: Vec<f64>,
    pub fit: LinearFit,
    /// Some median grew with `N`. Recorded, never treated as an error.
    pub non_monotone: bool,
}

/// `sup_gaps[k]` holds one sup-gap per seed for `ns[k]`.
pub fn summarize_gap_study(ns: &[usize], sup_gaps: &[Vec<f64>]) -> Result<GapStudySummary> {
    if ns.len() != sup_gaps.len() {
        return Err(Error::config("one gap list per N is required"));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("study.N_grid must be strictly increasing"));
    }
    let median_gap = sup_gaps
        .iter()
        .map(|g| median(g).ok_or_else(|| Error::config("every N needs at least one finite gap")))
        .collect::<Result<Vec<f64>>>()?;
    let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let fit = loglog_fit(&nf, &median_gap)?;
    let non_monotone = median_gap.windows(2).any(|w| w[1] > w[0]);
    Ok(GapStudySummary { ns: ns.to_vec(), median_gap, fit, non_monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{init_sample, InitSpec};
    use crate::model::{
        AnisotropicGaussians, CoefficientMode, EstimatorStrategy, PopulationEstimator, Rotation, TruncatedReluDot,
    };
    use crate::Sequential;
    use alloc::vec;

    #[test]
    fn reference_must_dominate_and_trace_is_aligned() {
        let data = AnisotropicGaussians::new(3, 0.5, 0.5, Rotation::Identity).unwrap();
        let act = TruncatedReluDot::new(-1.0, 1.0, 0.5, 1.5).unwrap();
        let est = PopulationEstimator::new(EstimatorStrategy::MonteCarlo { n_mc: 64, seed: 1 }, &data, &act).unwrap();
        let p = Problem { activation: &act, data: &data, estimator: &est, exec: &Sequential };
        let init = InitSpec::RadialSphere { r_lo: 0.1, r_hi: 2.0 };
        let big = init_sample(init, 40, 3, CoefficientMode::Fixed, 1.0, 9).unwrap();
        let cfg = DynamicsConfig { eps: 0.1, h_ode: 0.1, horizon: 0.4, snapshot_every: 2, ..Default::default() };
        let reference = ReferenceFlow::build(DynamicsKind::Pd, &big, &cfg, &p).unwrap();
        let err = risk_gap_trace(DynamicsKind::Sgd, &reference, &big, &cfg, &p).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let small = init_sample(init, 10, 3, CoefficientMode::Fixed, 1.0, 2).unwrap();
        let sgd = DynamicsConfig { eps: 0.01, h_ode: 0.01, snapshot_every: 20, ..cfg };
        let trace = risk_gap_trace(DynamicsKind::Sgd, &reference, &small, &sgd, &p).unwrap();
        assert_eq!(trace.times.len(), 3);
        assert_eq!(trace.reference[2], reference.reference_risk(0.4).unwrap().corrected);
        assert!(trace.sup_gap() >= trace.gaps()[0]);
        // A snapshot time the reference never visited is refused.
        let off = DynamicsConfig { snapshot_every: 5, ..sgd };
        assert!(matches!(risk_gap_trace(DynamicsKind::Sgd, &reference, &small, &off, &p), Err(Error::UncachedTime(_))));
    }

    #[test]
    fn summary_recovers_power_law_and_flags_increases() {
        let ns = [25, 100, 400];
        let gaps: Vec<Vec<f64>> = ns.iter().map(|&n| vec![2.0 / libm::sqrt(n as f64), 9.0, 1e-9]).collect();
        let s = summarize_gap_study(&ns, &gaps).unwrap();
        assert!((s.fit.slope + 0.5).abs() < 1e-12);
        assert!(!s.non_monotone);
        let bumpy = vec![vec![1.0], vec![2.0], vec![0.5]];
        assert!(summarize_gap_study(&ns, &bumpy).unwrap().non_monotone);
        assert!(summarize_gap_study(&[100, 25], &gaps[..2]).is_err());
    }
}
