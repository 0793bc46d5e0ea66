use meanfield_core::dynamics::{init_sample, noisy_sgd_run, sgd_run, RunOutput, TrajectoryRecord};
use meanfield_core::model::Ensemble;

use super::{Outcome, Report, Setup};
use crate::config::RunConfig;
use crate::error::LabResult;
use crate::output::Table;
use crate::schema;

#[derive(Debug, Clone)]
pub struct SgdReport {
    pub record: TrajectoryRecord,
    pub final_state: Ensemble,
}

/// One SGD trajectory; noisy SGD when `τ` or `λ` is positive.
pub(super) fn run(cfg: &RunConfig) -> LabResult<Outcome> {
    let s = Setup::new(cfg)?;
    let p = s.problem();
    let d = &cfg.dynamics;
    let ens = init_sample(cfg.init_spec(), d.n, cfg.model.data.d, cfg.mode(), d.scale, d.init.seed)?;
    let dc = cfg.dynamics_config(d.eps, 0);
    let noisy = !dc.noiseless();
    let RunOutput { record, final_state } = if noisy { noisy_sgd_run(&ens, &dc, &p)? } else { sgd_run(&ens, &dc, &p)? };
    let risk = record.column("risk_particles").unwrap_or_default();
    let mut summary = Table::new("summary", schema::SGD_SUMMARY);
    summary.push(vec![
        (if noisy { "noisy_sgd" } else { "sgd" }).into(),
        risk.first().copied().unwrap_or(f64::NAN).into(),
        risk.last().copied().unwrap_or(f64::NAN).into(),
        risk.iter().copied().fold(f64::INFINITY, f64::min).into(),
        final_state.max_abs_a().into(),
        record.rows.len().into(),
    ]);
    let tables =
        vec![Table::from_record("trajectory", &record), Table::from_state("final_state", &final_state), summary];
    let warnings = record.warnings.clone();
    Ok(Outcome { tables, report: Report::RunSgd(SgdReport { record, final_state }), warnings })
}
