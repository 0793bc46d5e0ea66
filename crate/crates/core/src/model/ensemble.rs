use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Whether the second-layer coefficients are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientMode {
    /// `a_i ≡ 1`, only `w_i` moves.
    Fixed,
    /// Both `a_i` and `w_i` move.
    General,
}

/// One neuron `θ = (a, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub a: f64,
    pub w: Vec<f64>,
}

impl Parameter {
    pub fn new(a: f64, w: Vec<f64>) -> Self {
        Self { a, w }
    }

    pub fn dim(&self) -> usize {
        1 + self.w.len()
    }

    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.dim());
        row.push(self.a);
        row.extend_from_slice(&self.w);
        row
    }
}

/// `N` neurons plus the coefficient mode and output scale `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim_w: usize,
    params: Vec<f64>,
    mode: CoefficientMode,
    scale: f64,
}

impl Ensemble {
    pub fn new(particles: &[Parameter], mode: CoefficientMode, scale: f64) -> Result<Self> {
        let first = particles.first().ok_or_else(|| Error::config("ensemble needs at least one particle"))?;
        let dim_w = first.w.len();
        let mut params = Vec::with_capacity(particles.len() * (dim_w + 1));
        for p in particles {
            if p.w.len() != dim_w {
                return Err(Error::DimensionMismatch { expected: dim_w, got: p.w.len() });
            }
            params.push(p.a);
            params.extend_from_slice(&p.w);
        }
        Self::from_flat(dim_w, params, mode, scale)
    }

    /// Builds from row-major `[a, w..]` rows.
    pub fn from_flat(dim_w: usize, params: Vec<f64>, mode: CoefficientMode, scale: f64) -> Result<Self> {
        let d = dim_w + 1;
        if params.is_empty() || params.len() % d != 0 {
            return Err(Error::config("parameter buffer is not a non-empty multiple of D"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("scale_alpha must be finite and > 0"));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("ensemble parameters must be finite"));
        }
        if mode == CoefficientMode::Fixed && params.chunks(d).any(|row| row[0] != 1.0) {
            return Err(Error::config("fixed-coefficient ensembles need a_i = 1"));
        }
        Ok(Self { dim_w, params, mode, scale })
    }

    pub fn len(&self) -> usize {
        self.params.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Full parameter dimension `D`.
    pub fn dim(&self) -> usize {
        self.dim_w + 1
    }

    pub fn dim_w(&self) -> usize {
        self.dim_w
    }

    pub fn mode(&self) -> CoefficientMode {
        self.mode
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("scale_alpha must be finite and > 0"));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.params[i * d..(i + 1) * d]
    }

    pub fn a(&self, i: usize) -> f64 {
        self.params[i * self.dim()]
    }

    pub fn w(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.params[i * d + 1..(i + 1) * d]
    }

    pub fn particle(&self, i: usize) -> Parameter {
        Parameter::new(self.a(i), self.w(i).to_vec())
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn max_abs_a(&self) -> f64 {
        (0..self.len()).map(|i| self.a(i).abs()).fold(0.0, f64::max)
    }

    pub fn mean_abs_a(&self) -> f64 {
        crate::math::pairwise_sum_by(self.len(), &|i| self.a(i).abs()) / self.len() as f64
    }

    /// `max_i ‖θ_i − θ'_i‖₂`, the pathwise coupling gap.
    pub fn max_particle_gap(&self, other: &Ensemble) -> Result<f64> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(Error::config("coupled ensembles must share N and D"));
        }
        Ok((0..self.len()).map(|i| crate::math::dist(self.theta(i), other.theta(i))).fold(0.0, f64::max))
    }
}
