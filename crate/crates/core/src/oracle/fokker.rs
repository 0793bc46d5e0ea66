use alloc::vec;
use alloc::vec::Vec;

use super::grid::{cfl_limit, fokker_planck_1d_step, GridDensity1D, GridDrift};
use crate::dynamics::{run_dynamics, DynamicsConfig, DynamicsKind, Problem, StepSchedule};
use crate::error::{Error, Result};
use crate::math::sq;
use crate::model::{CoefficientMode, Ensemble};
use crate::rng::{Purpose, StreamRng};

/// A 1-D fixed-coefficient comparison between the grid solver and a
/// Langevin particle system started from samples of the same density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FokkerPlanckCheck {
    pub half_width: f64,
    pub cells: usize,
    /// Histogram bins; must divide `cells`.
    pub bins: usize,
    pub init_mean: f64,
    pub init_sd: f64,
    pub xi: f64,
    pub tau: f64,
    pub lambda: f64,
    pub horizon: f64,
    /// Snapshot spacing.
    pub eps: f64,
    /// Euler–Maruyama step of the particles.
    pub h: f64,
    /// Grid steps use this fraction of the CFL bound.
    pub cfl_fraction: f64,
}

impl Default for FokkerPlanckCheck {
    fn default() -> Self {
        Self {
            half_width: 4.0,
            cells: 400,
            bins: 40,
            init_mean: 0.5,
            init_sd: 0.4,
            xi: 0.5,
            tau: 0.5,
            lambda: 1.0,
            horizon: 1.0,
            eps: 0.25,
            h: 0.005,
            cfl_fraction: 0.5,
        }
    }
}

impl FokkerPlanckCheck {
    fn validate(&self) -> Result<()> {
        if self.cells == 0 || self.bins == 0 || self.cells % self.bins != 0 {
            return Err(Error::config("fokker_planck.bins must divide fokker_planck.cells"));
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(Error::config("fokker_planck.cfl_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    fn dynamics(&self, seed: u64) -> DynamicsConfig {
        DynamicsConfig {
            eps: self.eps,
            lambda: self.lambda,
            tau: self.tau,
            horizon: self.horizon,
            h_ode: self.h,
            seed,
            snapshot_every: 1,
            schedule: StepSchedule::Constant(self.xi),
            ode_tol: 1.0,
        }
    }
}

/// Grid densities at `t = 0, ε, 2ε, …`.
pub fn solve_grid(cfg: &FokkerPlanckCheck, p: &Problem) -> Result<Vec<GridDensity1D>> {
    cfg.validate()?;
    cfg.dynamics(0).validate()?;
    let mut g = GridDensity1D::gaussian(cfg.half_width, cfg.cells, cfg.init_mean, cfg.init_sd)?;
    let drift = GridDrift::new(&g, p.estimator, p.activation, cfg.lambda)?;
    let dim = 2;
    let mut out = vec![g.clone()];
    let snapshots = cfg.dynamics(0).steps();
    for _ in 0..snapshots {
        let psi = drift.psi_prime(&g);
        let max_psi = psi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let bound = cfg.cfl_fraction * cfl_limit(g.dx(), max_psi, cfg.xi, cfg.tau, dim);
        let sub = if bound.is_finite() { libm::ceil(cfg.eps / bound).max(1.0) as usize } else { 1 };
        let dt = cfg.eps / sub as f64;
        for s in 0..sub {
            let psi = if s == 0 { psi.clone() } else { drift.psi_prime(&g) };
            g = fokker_planck_1d_step(&g, &psi, dt, cfg.xi, cfg.tau, dim)?;
        }
        out.push(g.clone());
    }
    Ok(out)
}

/// Samples `n` scalar weights from the cell-average density (inverse CDF
/// over cells, uniform within a cell).
pub fn sample_from_grid(g: &GridDensity1D, n: usize, seed: u64) -> Result<Ensemble> {
    let dx = g.dx();
    let mut cdf = Vec::with_capacity(g.cells());
    let mut acc = 0.0;
    for r in g.values() {
        acc += r * dx;
        cdf.push(acc);
    }
    let mut params = vec![0.0; 2 * n];
    for i in 0..n {
        let mut rng = StreamRng::new(seed, Purpose::Histogram, i as u64);
        let u = rng.uniform() * acc;
        let c = cdf.partition_point(|&v| v < u).min(g.cells() - 1);
        params[2 * i] = 1.0;
        params[2 * i + 1] = -g.half_width() + (c as f64 + rng.uniform()) * dx;
    }
    Ensemble::from_flat(1, params, CoefficientMode::Fixed, 1.0)
}

/// `Σ_b |P_grid(b) − P_particles(b)|` plus the particle mass outside `[−L, L]`.
pub fn l1_distance(g: &GridDensity1D, bins: usize, ens: &Ensemble) -> Result<f64> {
    let grid = g.bin_masses(bins)?;
    let mut hist = vec![0.0; bins];
    let width = 2.0 * g.half_width() / bins as f64;
    let mut outside = 0.0;
    let unit = 1.0 / ens.len() as f64;
    for i in 0..ens.len() {
        let b = libm::floor((ens.w(i)[0] + g.half_width()) / width);
        if b >= 0.0 && (b as usize) < bins {
            hist[b as usize] += unit;
        } else {
            outside += unit;
        }
    }
    Ok(grid.iter().zip(&hist).map(|(a, b)| (a - b).abs()).sum::<f64>() + outside)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FokkerPlanckReport {
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    pub grid_variance: Vec<f64>,
    pub particle_variance: Vec<f64>,
    pub grid_mass: Vec<f64>,
    pub boundary_mass: f64,
}

impl FokkerPlanckReport {
    pub fn terminal_l1(&self) -> f64 {
        *self.l1.last().unwrap_or(&f64::NAN)
    }
}

/// Runs `n` Langevin particles sampled from the initial grid density and
/// compares their histogram with the precomputed grid solution.
pub fn compare_with_particles(
    cfg: &FokkerPlanckCheck,
    grid: &[GridDensity1D],
    n: usize,
    seed: u64,
    p: &Problem,
) -> Result<FokkerPlanckReport> {
    let ens = sample_from_grid(&grid[0], n, seed)?;
    let mut report = FokkerPlanckReport {
        times: Vec::new(),
        l1: Vec::new(),
        grid_variance: Vec::new(),
        particle_variance: Vec::new(),
        grid_mass: Vec::new(),
        boundary_mass: grid.last().map(|g| g.boundary_mass(1)).unwrap_or(0.0),
    };
    run_dynamics(DynamicsKind::LangevinPd, &ens, &cfg.dynamics(seed), p, &mut |k, t, state, _| {
        let g = grid.get(k as usize).ok_or_else(|| Error::config("grid and particle snapshots disagree"))?;
        report.times.push(t);
        report.l1.push(l1_distance(g, cfg.bins, state)?);
        report.grid_variance.push(g.variance());
        report.grid_mass.push(g.mass());
        let nf = state.len() as f64;
        let mean = (0..state.len()).map(|i| state.w(i)[0]).sum::<f64>() / nf;
        let var = (0..state.len()).map(|i| sq(state.w(i)[0] - mean)).sum::<f64>() / (nf - 1.0);
        report.particle_variance.push(var);
        Ok(())
    })?;
    Ok(report)
}

/// Grid solve plus one particle comparison.
pub fn fokker_planck_vs_langevin(
    cfg: &FokkerPlanckCheck,
    n: usize,
    seed: u64,
    p: &Problem,
) -> Result<FokkerPlanckReport> {
    let grid = solve_grid(cfg, p)?;
    compare_with_particles(cfg, &grid, n, seed, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnisotropicGaussians, EstimatorStrategy, PopulationEstimator, Rotation, TruncatedReluDot};
    use crate::Sequential;

    #[test]
    fn initial_l1_is_sampling_error() {
        let g = GridDensity1D::gaussian(4.0, 400, 0.0, 0.5).unwrap();
        let mean_l1 = |n: usize| -> f64 {
            (0..8).map(|s| l1_distance(&g, 40, &sample_from_grid(&g, n, s).unwrap()).unwrap()).sum::<f64>() / 8.0
        };
        let ratio = mean_l1(1000) / mean_l1(4000);
        assert!((ratio / 2.0 - 1.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn short_run_tracks_grid() {
        let data = AnisotropicGaussians::new(1, 0.5, 0.5, Rotation::Identity).unwrap();
        let act = TruncatedReluDot::new(0.0, 1.0, -0.5, 1.0).unwrap();
        let est = PopulationEstimator::new(EstimatorStrategy::MonteCarlo { n_mc: 64, seed: 1 }, &data, &act).unwrap();
        let p = Problem { activation: &act, data: &data, estimator: &est, exec: &Sequential };
        let cfg = FokkerPlanckCheck { horizon: 0.5, eps: 0.25, h: 0.025, ..Default::default() };
        let r = fokker_planck_vs_langevin(&cfg, 2000, 3, &p).unwrap();
        assert_eq!(r.times.len(), 3);
        assert!(r.terminal_l1() < 0.15, "{:?}", r.l1);
        assert!(r.grid_mass.iter().all(|m| (m - 1.0).abs() < 1e-10));
    }
}
