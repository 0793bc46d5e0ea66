use meanfield_core::dynamics::{init_sample, DynamicsConfig, DynamicsKind};
use meanfield_core::oracle::{risk_gap_trace, summarize_gap_study, GapStudySummary, ReferenceFlow};

use super::{par_jobs, Outcome, Report, Setup};
use crate::config::RunConfig;
use crate::error::{LabError, LabResult};
use crate::output::Table;
use crate::schema;

/// Horizons beyond this are refused: the finite-N bounds grow like
/// `e^{KT}` (doubly exponentially with noise), so long runs say nothing.
pub const GAP_T_CAP: f64 = 5.0;

/// The reference must hold at least this many times the largest `N`.
pub const REF_FACTOR: usize = 8;

#[derive(Debug, Clone)]
pub struct GapScalingReport {
    pub summary: GapStudySummary,
    /// Sup-gaps per `N`, one per seed.
    pub sup_gaps: Vec<Vec<f64>>,
}

pub(super) fn run(cfg: &RunConfig) -> LabResult<Outcome> {
    let d = &cfg.dynamics;
    let st = &cfg.study;
    if d.horizon > GAP_T_CAP {
        return Err(LabError::config(format!("dynamics.T must be ≤ {GAP_T_CAP} for gap-scaling")));
    }
    let n_max = st.n_grid.iter().copied().max().ok_or_else(|| LabError::config("study.N_grid must not be empty"))?;
    if st.n_ref < REF_FACTOR * n_max {
        return Err(LabError::config(format!(
            "study.N_ref must be ≥ {REF_FACTOR} × max(study.N_grid) = {}",
            REF_FACTOR * n_max
        )));
    }
    let s = Setup::new(cfg)?;
    let p = s.problem();
    let run_cfg = cfg.dynamics_config(d.eps, 0);
    let ref_every = cfg.snapshot_every(st.ref_h_ode);
    let dt_run = run_cfg.snapshot_every as f64 * d.eps;
    let dt_ref = ref_every as f64 * st.ref_h_ode;
    if (dt_run - dt_ref).abs() > 1e-9 * dt_ref {
        return Err(LabError::config(format!(
            "snapshot spacing differs between runs ({dt_run}) and reference ({dt_ref}); set io.snapshot_dt to a multiple of dynamics.eps and study.ref_h_ode"
        )));
    }
    let noisy = !run_cfg.noiseless();
    let (ref_kind, kind) =
        if noisy { (DynamicsKind::LangevinPd, DynamicsKind::NoisySgd) } else { (DynamicsKind::Pd, DynamicsKind::Sgd) };
    let ref_cfg = DynamicsConfig {
        eps: st.ref_h_ode,
        h_ode: st.ref_h_ode,
        snapshot_every: ref_every,
        seed: st.ref_seed,
        ..run_cfg
    };
    let dim = cfg.model.data.d;
    let ens_ref = init_sample(cfg.init_spec(), st.n_ref, dim, cfg.mode(), d.scale, st.ref_seed)?;
    let reference = ReferenceFlow::build(ref_kind, &ens_ref, &ref_cfg, &p)?;
    let jobs: Vec<(usize, u64)> = st.n_grid.iter().flat_map(|&n| (0..st.seeds).map(move |seed| (n, seed))).collect();
    let traces = par_jobs(&jobs, |&(n, seed)| {
        let ens = init_sample(cfg.init_spec(), n, dim, cfg.mode(), d.scale, d.init.seed.wrapping_add(seed))?;
        Ok(risk_gap_trace(kind, &reference, &ens, &cfg.dynamics_config(d.eps, seed), &p)?)
    })?;

    let mut tables = Vec::new();
    let mut ref_table = Table::new("reference", schema::GAP_REFERENCE);
    for &t in reference.times() {
        let r = reference.reference_risk(t)?;
        ref_table.push(vec![t.into(), r.raw.into(), r.corrected.into()]);
    }
    tables.push(ref_table);
    let mut sup_gaps = vec![Vec::new(); st.n_grid.len()];
    for ((n, seed), tr) in jobs.iter().zip(&traces) {
        let mut t = Table::new(format!("gap_N{n}_seed{seed}"), schema::GAP_TRACE);
        for (((time, r), q), g) in tr.times.iter().zip(&tr.risk).zip(&tr.reference).zip(tr.gaps()) {
            t.push(vec![(*time).into(), (*r).into(), (*q).into(), g.into()]);
        }
        tables.push(t);
        let k = st.n_grid.iter().position(|m| m == n).expect("job N comes from the grid");
        sup_gaps[k].push(tr.sup_gap());
    }
    let summary = summarize_gap_study(&st.n_grid, &sup_gaps)?;
    let mut table = Table::new("summary", schema::GAP_SUMMARY);
    for (n, m) in summary.ns.iter().zip(&summary.median_gap) {
        table.push(vec![
            (*n).into(),
            (*m).into(),
            summary.fit.slope.into(),
            summary.fit.ci_low.into(),
            summary.fit.ci_high.into(),
        ]);
    }
    tables.push(table);
    let mut warnings = Vec::new();
    if summary.non_monotone {
        warnings.push("median gap is not monotone in N (recorded, not asserted)".to_string());
    }
    Ok(Outcome { tables, report: Report::GapScaling(GapScalingReport { summary, sup_gaps }), warnings })
}
