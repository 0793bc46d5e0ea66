use meanfield_core::dynamics::{coupled_run, init_sample, DynamicsKind};
use meanfield_core::stats::median;

use super::{fit_cells, par_jobs, try_fit, Outcome, Report, Setup};
use crate::config::RunConfig;
use crate::error::{LabError, LabResult};
use crate::output::Table;
use crate::schema;

/// Median (over seeds) sup of one gap column at each `ε`, and its slope.
#[derive(Debug, Clone)]
pub struct GapSweep {
    pub column: String,
    pub eps: Vec<f64>,
    pub median_sup: Vec<f64>,
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone)]
pub struct CoupledReport {
    pub sweeps: Vec<GapSweep>,
}

impl CoupledReport {
    pub fn sweep(&self, column: &str) -> Option<&GapSweep> {
        self.sweeps.iter().find(|s| s.column == column)
    }
}

/// The requested dynamics side by side from shared initial ensembles, for
/// every `ε` in the grid and every seed index.
pub(super) fn run(cfg: &RunConfig) -> LabResult<Outcome> {
    let s = Setup::new(cfg)?;
    let p = s.problem();
    let d = &cfg.dynamics;
    if d.kinds.len() < 2 {
        return Err(LabError::config("dynamics.kinds must list at least two dynamics"));
    }
    let kinds: Vec<DynamicsKind> = d.kinds.iter().map(|k| (*k).into()).collect();
    let eps_grid = if cfg.study.eps_grid.is_empty() { vec![d.eps] } else { cfg.study.eps_grid.clone() };
    let jobs: Vec<(usize, u64)> =
        (0..eps_grid.len()).flat_map(|e| (0..cfg.study.seeds).map(move |seed| (e, seed))).collect();
    let runs = par_jobs(&jobs, |&(e, seed)| {
        let ens =
            init_sample(cfg.init_spec(), d.n, cfg.model.data.d, cfg.mode(), d.scale, d.init.seed.wrapping_add(seed))?;
        Ok(coupled_run(&ens, &kinds, &cfg.dynamics_config(eps_grid[e], seed), &p)?.record)
    })?;
    let gap_columns: Vec<String> = runs[0].columns.iter().filter(|c| c.contains("gap_")).cloned().collect();
    let mut tables = Vec::new();
    let mut warnings = Vec::new();
    for (&(e, seed), rec) in jobs.iter().zip(&runs) {
        tables.push(Table::from_record(format!("coupled_eps{e}_seed{seed}"), rec));
        warnings.extend(rec.warnings.iter().map(|w| format!("eps={} seed={seed}: {w}", eps_grid[e])));
    }
    let mut summary = Table::new("summary", schema::COUPLED_SUMMARY);
    let mut sweeps = Vec::new();
    for col in &gap_columns {
        let median_sup: Vec<f64> = (0..eps_grid.len())
            .map(|e| {
                let sups: Vec<f64> = jobs
                    .iter()
                    .zip(&runs)
                    .filter(|((je, _), _)| *je == e)
                    .map(|(_, rec)| rec.column(col).unwrap_or_default().into_iter().fold(0.0, f64::max))
                    .collect();
                median(&sups).unwrap_or(f64::NAN)
            })
            .collect();
        let [slope, ci_low, ci_high] = fit_cells(try_fit(&eps_grid, &median_sup));
        for (e, m) in eps_grid.iter().zip(&median_sup) {
            summary.push(vec![
                col.as_str().into(),
                (*e).into(),
                (*m).into(),
                slope.into(),
                ci_low.into(),
                ci_high.into(),
            ]);
        }
        sweeps.push(GapSweep { column: col.clone(), eps: eps_grid.clone(), median_sup, slope, ci_low, ci_high });
    }
    tables.push(summary);
    Ok(Outcome { tables, report: Report::RunCoupled(CoupledReport { sweeps }), warnings })
}
