use meanfield_core::dynamics::{init_sample, noisy_sgd_run, sgd_run, DynamicsConfig};

use super::{Outcome, Report, Setup};
use crate::config::{ModeKind, RunConfig};
use crate::error::{LabError, LabResult};
use crate::output::Table;
use crate::schema;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoReport {
    pub initial_risk: f64,
    pub risk_at_t: f64,
    pub terminal_risk: f64,
    pub best_risk: f64,
    /// `1 − terminal/initial`.
    pub reduction: f64,
    /// `max − min` of the risk over snapshots in `[T, 10T]`.
    pub plateau: f64,
}

/// Fixed-coefficient SGD on the anisotropic Gaussians, run to `10T` so the
/// risk can be inspected over the window `[T, 10T]`.
pub(super) fn run(cfg: &RunConfig) -> LabResult<Outcome> {
    if cfg.dynamics.mode != ModeKind::Fixed {
        return Err(LabError::config("gaussians-demo is a fixed-coefficient experiment: set dynamics.mode to fixed"));
    }
    if cfg.model.data.points != 0 {
        return Err(LabError::config("gaussians-demo streams from the mixture: model.data.points must be 0"));
    }
    let s = Setup::new(cfg)?;
    let p = s.problem();
    let d = &cfg.dynamics;
    let ens = init_sample(cfg.init_spec(), d.n, cfg.model.data.d, cfg.mode(), d.scale, d.init.seed)?;
    let t = d.horizon;
    let dc = DynamicsConfig { horizon: 10.0 * t, ..cfg.dynamics_config(d.eps, 0) };
    let out = if dc.noiseless() { sgd_run(&ens, &dc, &p)? } else { noisy_sgd_run(&ens, &dc, &p)? };
    let times = out.record.times();
    let risk = out.record.column("risk_particles").unwrap_or_default();
    let window: Vec<f64> =
        times.iter().zip(&risk).filter(|(time, _)| **time >= t * (1.0 - 1e-12)).map(|(_, r)| *r).collect();
    let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
    let at_t = window.first().copied().unwrap_or(f64::NAN);
    let initial = risk[0];
    let terminal = *risk.last().expect("at least the initial row");
    let report = DemoReport {
        initial_risk: initial,
        risk_at_t: at_t,
        terminal_risk: terminal,
        best_risk: risk.iter().copied().fold(f64::INFINITY, f64::min),
        reduction: 1.0 - terminal / initial,
        plateau: hi - lo,
    };
    let mut summary = Table::new("summary", schema::DEMO_SUMMARY);
    summary.push(vec![
        report.initial_risk.into(),
        report.risk_at_t.into(),
        report.terminal_risk.into(),
        report.best_risk.into(),
        report.reduction.into(),
        report.plateau.into(),
    ]);
    let tables = vec![Table::from_record("trajectory", &out.record), summary];
    Ok(Outcome { tables, report: Report::GaussiansDemo(report), warnings: out.record.warnings })
}
