use meanfield_core::dynamics::init_sample;
use meanfield_core::kernel::{kernel_crossover_experiment, CrossoverReport};

use super::{Outcome, Report, EXEC};
use crate::config::RunConfig;
use crate::error::{LabError, LabResult};
use crate::output::Table;
use crate::schema;

#[derive(Debug, Clone)]
pub struct CrossoverSummary {
    pub report: CrossoverReport,
}

/// Rescaled flows for every `α` from one initial ensemble, against the
/// linearized residual dynamics of its kernel.
pub(super) fn run(cfg: &RunConfig) -> LabResult<Outcome> {
    let act = cfg.activation()?;
    let data = cfg.data()?;
    let ds = data.empirical().ok_or_else(|| LabError::config("kernel-crossover needs model.data.points > 0"))?;
    let d = &cfg.dynamics;
    let ens = init_sample(cfg.init_spec(), d.n, cfg.model.data.d, cfg.mode(), 1.0, d.init.seed)?;
    let report =
        kernel_crossover_experiment(&ens, &cfg.study.alpha_grid, &cfg.rescaled_flow_config(), ds, &act, &EXEC)?;
    let mut rows = Table::new("crossover", schema::CROSSOVER);
    for r in &report.rows {
        rows.push(vec![r.alpha.into(), r.t.into(), r.gap_l2.into(), r.risk_alpha.into(), r.risk_linearized.into()]);
    }
    let mut summary = Table::new("summary", schema::CROSSOVER_SUMMARY);
    for ((a, g), h) in report.alphas.iter().zip(&report.sup_gap).zip(&report.sup_gap_half) {
        summary.push(vec![
            (*a).into(),
            (*g).into(),
            (*h).into(),
            report.fit.slope.into(),
            report.fit.ci_low.into(),
            report.fit.ci_high.into(),
            report.initial_risk.into(),
            report.min_eigenvalue.into(),
            report.y_rms.into(),
        ]);
    }
    let warnings = report.warnings.clone();
    Ok(Outcome { tables: vec![rows, summary], report: Report::KernelCrossover(CrossoverSummary { report }), warnings })
}
