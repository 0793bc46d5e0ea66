//! Independent references for the particle dynamics: a large-N particle
//! flow with finite-N bias removed, a 1-D Fokker–Planck grid solver, and the
//! empirical 2-Wasserstein distance.

mod fokker;
mod gap;
mod grid;
mod reference;
mod w2;

pub use fokker::{
    compare_with_particles, fokker_planck_vs_langevin, l1_distance, sample_from_grid, solve_grid, FokkerPlanckCheck,
    FokkerPlanckReport,
};
pub use gap::{risk_gap_trace, summarize_gap_study, GapStudySummary, GapTrace};
pub use grid::{cfl_limit, fokker_planck_1d_step, GridDensity1D, GridDrift};
pub use reference::{corrected_risk, ReferenceFlow, ReferenceRisk};
pub use w2::{min_cost_assignment, w2_estimate, W2_ASSIGNMENT_CAP};
