use meanfield_core::dynamics::Problem;
use meanfield_core::model::TruncatedReluDot;
use meanfield_core::oracle::{compare_with_particles, solve_grid, FokkerPlanckReport};

use super::{fit_cells, par_jobs, try_fit, Outcome, Report, EXEC};
use crate::config::RunConfig;
use crate::error::{LabError, LabResult};
use crate::output::Table;
use crate::schema;

#[derive(Debug, Clone)]
pub struct FokkerPlanckSummary {
    pub ns: Vec<usize>,
    /// Mean over seeds of the terminal histogram L1 distance.
    pub mean_terminal_l1: Vec<f64>,
    /// `mean_terminal_l1[k−1] / mean_terminal_l1[k]`; NaN for the first entry.
    pub ratios: Vec<f64>,
    pub slope: f64,
    /// Terminal grid and particle variances of the null-activation run.
    pub ou_grid_variance: f64,
    pub ou_particle_variance: f64,
    /// Stationary variance `τ/(λD)` of the pure Ornstein–Uhlenbeck flow, `D = 2`.
    pub ou_target: f64,
}

impl FokkerPlanckSummary {
    pub fn ou_grid_rel_err(&self) -> f64 {
        (self.ou_grid_variance / self.ou_target - 1.0).abs()
    }

    pub fn ou_particle_rel_err(&self) -> f64 {
        (self.ou_particle_variance / self.ou_target - 1.0).abs()
    }
}

/// Grid density against Langevin particles in one dimension, first with the
/// configured activation over `N_grid`, then with a null activation where
/// the flow is Ornstein–Uhlenbeck and the stationary variance is known.
pub(super) fn run(cfg: &RunConfig) -> LabResult<Outcome> {
    if cfg.model.data.d != 1 {
        return Err(LabError::config("fokker-planck-check needs model.data.d = 1"));
    }
    if cfg.study.n_grid.is_empty() {
        return Err(LabError::config("study.N_grid must not be empty"));
    }
    let fp = &cfg.fokker_planck;
    let act = cfg.activation()?;
    let data = cfg.data()?;
    let est = cfg.estimator(&data, &act)?;
    let p = Problem { activation: &act, data: data.model(), estimator: &est, exec: &EXEC };
    let check = fp.check(fp.horizon);
    let grid = solve_grid(&check, &p)?;
    let jobs: Vec<(usize, u64)> =
        cfg.study.n_grid.iter().flat_map(|&n| (0..cfg.study.seeds).map(move |s| (n, s))).collect();
    let reports =
        par_jobs(&jobs, |&(n, s)| Ok(compare_with_particles(&check, &grid, n, cfg.seed.wrapping_add(s), &p)?))?;

    let mut tables = Vec::new();
    for (&(n, s), r) in jobs.iter().zip(&reports) {
        tables.push(report_table(format!("fp_N{n}_seed{s}"), r));
    }
    let ns = cfg.study.n_grid.clone();
    let mean_terminal_l1: Vec<f64> = ns
        .iter()
        .map(|n| {
            let l1: Vec<f64> =
                jobs.iter().zip(&reports).filter(|((m, _), _)| m == n).map(|(_, r)| r.terminal_l1()).collect();
            l1.iter().sum::<f64>() / l1.len() as f64
        })
        .collect();
    let ratios: Vec<f64> =
        (0..ns.len()).map(|k| if k == 0 { f64::NAN } else { mean_terminal_l1[k - 1] / mean_terminal_l1[k] }).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let [slope, ci_low, ci_high] = fit_cells(try_fit(&xs, &mean_terminal_l1));
    let mut summary = Table::new("summary", schema::FP_SUMMARY);
    for k in 0..ns.len() {
        summary.push(vec![
            ns[k].into(),
            mean_terminal_l1[k].into(),
            ratios[k].into(),
            slope.into(),
            ci_low.into(),
            ci_high.into(),
        ]);
    }

    // Null activation: the drift is pure weight decay.
    let null = TruncatedReluDot::new(0.0, 0.0, cfg.model.activation.t1, cfg.model.activation.t2)?;
    let null_est = cfg.estimator(&data, &null)?;
    let q = Problem { activation: &null, data: data.model(), estimator: &null_est, exec: &EXEC };
    let ou_check = fp.check(fp.ou_horizon);
    let ou_grid = solve_grid(&ou_check, &q)?;
    let ou = compare_with_particles(&ou_check, &ou_grid, fp.ou_particles, cfg.seed, &q)?;
    let big_d = (cfg.model.data.d + 1) as f64;
    let ou_target = fp.tau / (fp.lambda * big_d);
    let mut ou_table = Table::new("ou", schema::FP_OU);
    for k in 0..ou.times.len() {
        ou_table.push(vec![
            ou.times[k].into(),
            ou.grid_variance[k].into(),
            ou.particle_variance[k].into(),
            ou_target.into(),
        ]);
    }
    let report = FokkerPlanckSummary {
        ns,
        mean_terminal_l1,
        ratios,
        slope,
        ou_grid_variance: *ou.grid_variance.last().expect("initial snapshot"),
        ou_particle_variance: *ou.particle_variance.last().expect("initial snapshot"),
        ou_target,
    };
    let mut ou_summary = Table::new("ou_summary", schema::FP_OU_SUMMARY);
    ou_summary.push(vec![
        report.ou_grid_variance.into(),
        report.ou_particle_variance.into(),
        ou_target.into(),
        report.ou_grid_rel_err().into(),
        report.ou_particle_rel_err().into(),
    ]);

    let mut warnings = Vec::new();
    for (name, mass) in [("grid", reports[0].boundary_mass), ("ou grid", ou.boundary_mass)] {
        if mass > 1e-6 {
            warnings.push(format!("{name} mass next to the boundary is {mass:.2e}; widen fokker_planck.half_width"));
        }
    }
    tables.push(ou_table);
    tables.push(ou_summary);
    tables.push(summary);
    Ok(Outcome { tables, report: Report::FokkerPlanck(report), warnings })
}

fn report_table(name: String, r: &FokkerPlanckReport) -> Table {
    let mut t = Table::new(name, schema::FP_TRACE);
    for k in 0..r.times.len() {
        t.push(vec![
            r.times[k].into(),
            r.l1[k].into(),
            r.grid_variance[k].into(),
            r.particle_variance[k].into(),
            r.grid_mass[k].into(),
        ]);
    }
    t
}
