//! One driver per experiment. A driver computes everything in memory and
//! returns its tables; writing happens afterwards, all at once.
//!
//! Independent jobs (seeds, grid points) run on the current rayon pool and
//! are collected in grid order, so outputs do not depend on the pool size.

mod coupled;
mod crossover;
mod demo;
mod fokker;
mod gap;
mod krr;
mod sgd;

use meanfield_core::dynamics::Problem;
use meanfield_core::model::{PopulationEstimator, TruncatedReluDot};
use meanfield_core::stats::{loglog_fit, LinearFit};
use rayon::prelude::*;

pub use coupled::{CoupledReport, GapSweep};
pub use crossover::CrossoverSummary;
pub use demo::DemoReport;
pub use fokker::FokkerPlanckSummary;
pub use gap::GapScalingReport;
pub use krr::KrrReport;
pub use sgd::SgdReport;

use crate::config::{Data, Experiment, RunConfig};
use crate::error::LabResult;
use crate::exec::RayonExecutor;
use crate::output::Table;

#[derive(Debug, Clone)]
pub enum Report {
    RunSgd(SgdReport),
    RunCoupled(CoupledReport),
    GapScaling(GapScalingReport),
    GaussiansDemo(DemoReport),
    KernelCrossover(CrossoverSummary),
    FokkerPlanck(FokkerPlanckSummary),
    Krr(KrrReport),
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Data tables first, summary last.
    pub tables: Vec<Table>,
    pub report: Report,
    pub warnings: Vec<String>,
}

pub fn run(cfg: &RunConfig) -> LabResult<Outcome> {
    match cfg.experiment {
        Experiment::RunSgd => sgd::run(cfg),
        Experiment::RunCoupled => coupled::run(cfg),
        Experiment::GapScaling => gap::run(cfg),
        Experiment::GaussiansDemo => demo::run(cfg),
        Experiment::KernelCrossover => crossover::run(cfg),
        Experiment::FokkerPlanckCheck => fokker::run(cfg),
        Experiment::KrrCheck => krr::run(cfg),
    }
}

static EXEC: RayonExecutor = RayonExecutor;

/// Activation, data stream and estimator, built once per run.
struct Setup {
    act: TruncatedReluDot,
    data: Data,
    est: PopulationEstimator,
}

impl Setup {
    fn new(cfg: &RunConfig) -> LabResult<Self> {
        let act = cfg.activation()?;
        let data = cfg.data()?;
        let est = cfg.estimator(&data, &act)?;
        Ok(Self { act, data, est })
    }

    fn problem(&self) -> Problem<'_> {
        Problem { activation: &self.act, data: self.data.model(), estimator: &self.est, exec: &EXEC }
    }
}

/// Runs `f` over `jobs` on the pool; results come back in input order.
fn par_jobs<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> LabResult<T> + Sync) -> LabResult<Vec<T>> {
    jobs.par_iter().map(&f).collect()
}

/// Log-log fit, or `None` when there are too few or non-positive points.
fn try_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    loglog_fit(xs, ys).ok()
}

fn fit_cells(fit: Option<LinearFit>) -> [f64; 3] {
    fit.map(|f| [f.slope, f.ci_low, f.ci_high]).unwrap_or([f64::NAN; 3])
}
