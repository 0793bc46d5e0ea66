use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, pairwise_sum, pairwise_sum_by, sq};
use crate::model::{Activation, PopulationEstimator};

/// Cell averages of a density on `[−L, L]` with `M` uniform cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity1D {
    half_width: f64,
    rho: Vec<f64>,
    time: f64,
}

impl GridDensity1D {
    pub fn from_cells(half_width: f64, rho: Vec<f64>, time: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || rho.len() < 2 {
            return Err(Error::config("grid needs L > 0 and at least two cells"));
        }
        if rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::config("grid density must be finite and nonnegative"));
        }
        Ok(Self { half_width, rho, time })
    }

    /// Normalized cell-midpoint samples of `N(mean, sd²)`.
    pub fn gaussian(half_width: f64, cells: usize, mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::config("initial grid sd must be > 0"));
        }
        let mut g = Self::from_cells(half_width, vec![0.0; cells], 0.0)?;
        for c in 0..cells {
            let z = (g.center(c) - mean) / sd;
            g.rho[c] = exp(-0.5 * z * z);
        }
        let mass = g.mass();
        g.rho.iter_mut().for_each(|r| *r /= mass);
        Ok(g)
    }

    pub fn cells(&self) -> usize {
        self.rho.len()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.rho.len() as f64
    }

    pub fn center(&self, c: usize) -> f64 {
        -self.half_width + (c as f64 + 0.5) * self.dx()
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.rho) * self.dx()
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum_by(self.cells(), &|c| self.center(c) * self.rho[c]) * self.dx()
    }

    /// Variance with the within-cell (uniform) contribution `dx²/12`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let dx = self.dx();
        pairwise_sum_by(self.cells(), &|c| sq(self.center(c) - m) * self.rho[c]) * dx + dx * dx / 12.0
    }

    /// Mass in the outermost `k` cells on each side.
    pub fn boundary_mass(&self, k: usize) -> f64 {
        let m = self.cells();
        let k = k.min(m / 2);
        (self.rho[..k].iter().sum::<f64>() + self.rho[m - k..].iter().sum::<f64>()) * self.dx()
    }

    /// Probability in each of `bins` equal groups of consecutive cells.
    pub fn bin_masses(&self, bins: usize) -> Result<Vec<f64>> {
        if bins == 0 || self.cells() % bins != 0 {
            return Err(Error::config("histogram bins must divide the cell count"));
        }
        let per = self.cells() / bins;
        Ok(self.rho.chunks(per).map(|c| c.iter().sum::<f64>() * self.dx()).collect())
    }
}

/// Largest stable step: `min(Δw²D/(8ξτ), Δw/(4ξ max|ψ'|))`.
pub fn cfl_limit(dx: f64, max_psi: f64, xi: f64, tau: f64, dim: usize) -> f64 {
    let diff = if tau > 0.0 { dx * dx * dim as f64 / (8.0 * xi * tau) } else { f64::INFINITY };
    let adv = if max_psi > 0.0 { dx / (4.0 * xi * max_psi) } else { f64::INFINITY };
    diff.min(adv)
}

/// One explicit finite-volume step of
/// `∂_t ρ = 2ξ ∂_w(ρ ψ') + (2ξτ/D) ∂²_w ρ` with zero flux at `±L`.
/// The drift flux is upwinded on face velocities `−2ξ(ψ'_m + ψ'_{m+1})/2`;
/// diffusion uses the centered difference.
pub fn fokker_planck_1d_step(
    rho: &GridDensity1D,
    psi_prime: &[f64],
    dt: f64,
    xi: f64,
    tau: f64,
    dim: usize,
) -> Result<GridDensity1D> {
    let m = rho.cells();
    if psi_prime.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: psi_prime.len() });
    }
    let dx = rho.dx();
    let max_psi = psi_prime.iter().fold(0.0f64, |a, p| a.max(p.abs()));
    let max_dt = cfl_limit(dx, max_psi, xi, tau, dim);
    if !(dt > 0.0) || dt > max_dt {
        return Err(Error::Cfl { dt, max_dt });
    }
    let diff = 2.0 * xi * tau / dim as f64;
    let r = &rho.rho;
    // flux[f] is the flux through the face between cells f and f+1.
    let mut flux = vec![0.0; m - 1];
    for f in 0..m - 1 {
        let v = -2.0 * xi * 0.5 * (psi_prime[f] + psi_prime[f + 1]);
        let adv = if v > 0.0 { v * r[f] } else { v * r[f + 1] };
        flux[f] = adv - diff * (r[f + 1] - r[f]) / dx;
    }
    let mut out = r.clone();
    let c = dt / dx;
    for k in 0..m {
        let left = if k == 0 { 0.0 } else { flux[k - 1] };
        let right = if k == m - 1 { 0.0 } else { flux[k] };
        out[k] -= c * (right - left);
    }
    if out.iter().any(|v| !(*v >= 0.0)) {
        // Roundoff can produce tiny negatives far in the tails.
        let worst = out.iter().fold(0.0f64, |a, v| a.min(*v));
        if worst < -1e-14 || worst.is_nan() {
            return Err(Error::LinearAlgebra("grid density lost positivity".into()));
        }
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    Ok(GridDensity1D { half_width: rho.half_width, rho: out, time: rho.time + dt })
}

/// Self-consistent drift `ψ'(w) = ∂_w v(w) + ∫ ∂₁u(w, w′) ρ(dw′) + λw` for
/// fixed-coefficient neurons with scalar weights, on the frozen Monte Carlo
/// set. `σ` and `∂_wσ` at the cell centers are tabulated once.
#[derive(Debug, Clone)]
pub struct GridDrift {
    n: usize,
    cells: usize,
    lambda: f64,
    centers: Vec<f64>,
    ys: Vec<f64>,
    sigma: Vec<f64>,
    dsigma: Vec<f64>,
}

impl GridDrift {
    pub fn new(grid: &GridDensity1D, est: &PopulationEstimator, act: &dyn Activation, lambda: f64) -> Result<Self> {
        let set = est.frozen().ok_or_else(|| Error::unsupported("the grid drift needs a Monte Carlo estimator"))?;
        act.check_dims(set.dim(), 1)?;
        let m = grid.cells();
        let n = set.len();
        let centers: Vec<f64> = (0..m).map(|c| grid.center(c)).collect();
        let mut sigma = vec![0.0; n * m];
        let mut dsigma = vec![0.0; n * m];
        for j in 0..n {
            for c in 0..m {
                let mut g = [0.0];
                sigma[j * m + c] = act.sigma_accumulate_grad(set.x(j), &[centers[c]], 1.0, &mut g);
                dsigma[j * m + c] = g[0];
            }
        }
        Ok(Self { n, cells: m, lambda, centers, ys: set.ys().to_vec(), sigma, dsigma })
    }

    pub fn psi_prime(&self, rho: &GridDensity1D) -> Vec<f64> {
        let m = self.cells;
        let dx = rho.dx();
        let r = rho.values();
        // Mean-field prediction at each frozen point, minus the label.
        let resid: Vec<f64> = (0..self.n)
            .map(|j| {
                let row = &self.sigma[j * m..(j + 1) * m];
                pairwise_sum_by(m, &|c| row[c] * r[c]) * dx - self.ys[j]
            })
            .collect();
        let inv = 1.0 / self.n as f64;
        (0..m)
            .map(|c| {
                let s = pairwise_sum_by(self.n, &|j| resid[j] * self.dsigma[j * m + c]);
                s * inv + self.lambda * self.centers[c]
            })
            .collect()
    }
}
