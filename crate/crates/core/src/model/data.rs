use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamRng};

/// Source of labelled examples `(x, y)`.
pub trait DataModel: Sync {
    fn dim(&self) -> usize;

    /// Draws one example into `x` and returns its label.
    fn sample(&self, rng: &mut StreamRng, x: &mut [f64]) -> f64;

    /// The fixed sample set used to turn expectations into finite sums.
    fn frozen_set(&self, n_mc: usize, seed: u64) -> Result<FrozenSet>;

    fn label_bound(&self) -> f64;

    fn as_gaussian_mixture(&self) -> Option<&AnisotropicGaussians> {
        None
    }
}

/// Frozen examples, row-major `n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSet {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl FrozenSet {
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if ys.is_empty() || xs.len() != dim * ys.len() {
            return Err(Error::config("frozen set needs n ≥ 1 rows of length d"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::config("frozen set entries must be finite"));
        }
        Ok(Self { dim, xs, ys })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn x(&self, j: usize) -> &[f64] {
        &self.xs[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.ys[j]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn mean_y2(&self) -> f64 {
        crate::math::pairwise_sum_by(self.len(), &|j| self.ys[j] * self.ys[j]) / self.len() as f64
    }
}

/// How the orthogonal matrix `U` of the anisotropic model is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Rotation {
    Identity,
    /// Haar-distributed, drawn from the given seed.
    Haar {
        seed: u64,
    },
    /// Row-major `d × d`; must be orthogonal to 1e-12.
    Explicit(Vec<f64>),
}

/// Two centred Gaussians with labels ±1 (probability 1/2 each) and
/// covariances `Σ± = Uᵀ diag((1 ± Δ)² I_{s0}, I_{d−s0}) U`, `s0 = round(γ d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropicGaussians {
    d: usize,
    gamma: f64,
    delta: f64,
    s0: usize,
    rotation: Vec<f64>,
    scales: [Vec<f64>; 2],
}

impl AnisotropicGaussians {
    pub fn new(d: usize, gamma: f64, delta: f64, rotation: Rotation) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("model.data.d must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config("model.data.gamma must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::config("model.data.delta must lie in [0, 1)"));
        }
        let s0 = libm::round(gamma * d as f64) as usize;
        let u = match rotation {
            Rotation::Identity => {
                let mut u = vec![0.0; d * d];
                for i in 0..d {
                    u[i * d + i] = 1.0;
                }
                u
            }
            Rotation::Haar { seed } => haar_orthogonal(d, seed),
            Rotation::Explicit(u) => {
                if u.len() != d * d {
                    return Err(Error::DimensionMismatch { expected: d * d, got: u.len() });
                }
                u
            }
        };
        let err = orthogonality_error(&u, d);
        if err > 1e-12 {
            return Err(Error::config("model.data rotation is not orthogonal to 1e-12"));
        }
        let scale = |sign: f64| -> Vec<f64> { (0..d).map(|k| if k < s0 { 1.0 + sign * delta } else { 1.0 }).collect() };
        Ok(Self { d, gamma, delta, s0, rotation: u, scales: [scale(1.0), scale(-1.0)] })
    }

    pub fn s0(&self) -> usize {
        self.s0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rotation(&self) -> &[f64] {
        &self.rotation
    }

    /// Mixture components as `(probability, label, index)`.
    pub fn components(&self) -> [(f64, f64, usize); 2] {
        [(0.5, 1.0, 0), (0.5, -1.0, 1)]
    }

    /// `U w`.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..d).map(|k| crate::math::dot(&self.rotation[k * d..(k + 1) * d], w)).collect()
    }

    /// `⟨a, Σ_c b⟩` given projections `U a`, `U b`.
    pub fn bilinear(&self, component: usize, ua: &[f64], ub: &[f64]) -> f64 {
        let s = &self.scales[component];
        let mut acc = 0.0;
        for k in 0..self.d {
            acc += s[k] * s[k] * ua[k] * ub[k];
        }
        acc
    }

    /// `Σ_c b` given the projection `U b`.
    pub fn apply_cov(&self, component: usize, ub: &[f64]) -> Vec<f64> {
        let d = self.d;
        let s = &self.scales[component];
        let mut out = vec![0.0; d];
        for k in 0..d {
            let c = s[k] * s[k] * ub[k];
            crate::math::axpy(c, &self.rotation[k * d..(k + 1) * d], &mut out);
        }
        out
    }

    fn sample_component(&self, component: usize, rng: &mut StreamRng, x: &mut [f64]) {
        let d = self.d;
        let mut z = vec![0.0; d];
        rng.fill_normal(&mut z);
        x.fill(0.0);
        let s = &self.scales[component];
        for k in 0..d {
            crate::math::axpy(s[k] * z[k], &self.rotation[k * d..(k + 1) * d], x);
        }
    }
}

impl DataModel for AnisotropicGaussians {
    fn dim(&self) -> usize {
        self.d
    }

    fn sample(&self, rng: &mut StreamRng, x: &mut [f64]) -> f64 {
        let plus = rng.next_u64() >> 63 == 0;
        self.sample_component(if plus { 0 } else { 1 }, rng, x);
        if plus {
            1.0
        } else {
            -1.0
        }
    }

    /// Class-balanced: labels alternate `+1, −1, …`.
    fn frozen_set(&self, n_mc: usize, seed: u64) -> Result<FrozenSet> {
        if n_mc == 0 {
            return Err(Error::config("estimator.n_mc must be ≥ 1"));
        }
        let mut rng = StreamRng::new(seed, Purpose::Frozen, 0);
        let mut xs = vec![0.0; n_mc * self.d];
        let mut ys = vec![0.0; n_mc];
        for j in 0..n_mc {
            let component = j % 2;
            self.sample_component(component, &mut rng, &mut xs[j * self.d..(j + 1) * self.d]);
            ys[j] = if component == 0 { 1.0 } else { -1.0 };
        }
        FrozenSet::new(self.d, xs, ys)
    }

    fn label_bound(&self) -> f64 {
        1.0
    }

    fn as_gaussian_mixture(&self) -> Option<&AnisotropicGaussians> {
        Some(self)
    }
}

/// A finite list of examples. Sampling draws uniformly with replacement, and
/// the frozen set is the full list, so population expectations are exact
/// finite averages.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDataset {
    set: FrozenSet,
}

impl EmpiricalDataset {
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        Ok(Self { set: FrozenSet::new(dim, xs, ys)? })
    }

    /// `n` draws from another model, frozen into a dataset.
    pub fn draw_from(model: &dyn DataModel, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("dataset size must be ≥ 1"));
        }
        let d = model.dim();
        let mut rng = StreamRng::new(seed, Purpose::Auxiliary, 0);
        let mut xs = vec![0.0; n * d];
        let mut ys = vec![0.0; n];
        for j in 0..n {
            ys[j] = model.sample(&mut rng, &mut xs[j * d..(j + 1) * d]);
        }
        Self::new(d, xs, ys)
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn points(&self) -> &FrozenSet {
        &self.set
    }

    pub fn x(&self, j: usize) -> &[f64] {
        self.set.x(j)
    }

    pub fn ys(&self) -> &[f64] {
        self.set.ys()
    }
}

impl DataModel for EmpiricalDataset {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn sample(&self, rng: &mut StreamRng, x: &mut [f64]) -> f64 {
        let j = rng.index(self.set.len());
        x.copy_from_slice(self.set.x(j));
        self.set.y(j)
    }

    fn frozen_set(&self, _n_mc: usize, _seed: u64) -> Result<FrozenSet> {
        Ok(self.set.clone())
    }

    fn label_bound(&self) -> f64 {
        self.set.ys().iter().fold(0.0, |m, y| m.max(y.abs()))
    }
}

fn haar_orthogonal(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamRng::new(seed, Purpose::Rotation, 0);
    let mut g = vec![0.0; d * d];
    rng.fill_normal(&mut g);
    let m = DMatrix::from_row_slice(d, d, &g);
    let qr = m.qr();
    let (q, r) = qr.unpack();
    // Sign-fix so the law is Haar rather than QR-convention dependent.
    let mut u = vec![0.0; d * d];
    for j in 0..d {
        let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            u[i * d + j] = q[(i, j)] * sign;
        }
    }
    u
}

fn orthogonality_error(u: &[f64], d: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += u[k * d + i] * u[k * d + j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_rotation_is_orthogonal() {
        let g = AnisotropicGaussians::new(12, 0.5, 0.3, Rotation::Haar { seed: 4 }).unwrap();
        assert!(orthogonality_error(g.rotation(), 12) < 1e-13);
        assert_eq!(g.s0(), 6);
    }

    #[test]
    fn frozen_set_is_class_balanced() {
        let g = AnisotropicGaussians::new(3, 0.5, 0.5, Rotation::Identity).unwrap();
        let f = g.frozen_set(100, 1).unwrap();
        assert_eq!(f.ys().iter().sum::<f64>(), 0.0);
        assert_eq!(f.mean_y2(), 1.0);
    }

    #[test]
    fn sample_covariance_matches_model() {
        let g = AnisotropicGaussians::new(2, 0.5, 0.5, Rotation::Identity).unwrap();
        let mut rng = StreamRng::new(3, Purpose::Data, 0);
        let n = 100_000;
        let mut x = [0.0; 2];
        let (mut plus, mut minus, mut np) = (0.0, 0.0, 0usize);
        for _ in 0..n {
            let y = g.sample(&mut rng, &mut x);
            if y > 0.0 {
                plus += x[0] * x[0];
                np += 1;
            } else {
                minus += x[0] * x[0];
            }
        }
        let vp = plus / np as f64;
        let vm = minus / (n - np) as f64;
        assert!((vp - 2.25).abs() < 0.05, "{vp}");
        assert!((vm - 0.25).abs() < 0.01, "{vm}");
        assert!((np as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn rejects_non_orthogonal_rotation() {
        let bad = Rotation::Explicit(vec![1.0, 0.1, 0.0, 1.0]);
        assert!(AnisotropicGaussians::new(2, 0.5, 0.1, bad).is_err());
    }

    #[test]
    fn empirical_frozen_set_is_the_dataset() {
        let e = EmpiricalDataset::new(1, vec![1.0, 2.0], vec![0.5, -0.5]).unwrap();
        let f = e.frozen_set(7, 9).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(e.label_bound(), 0.5);
    }
}
