use crate::error::{check_dim, Error, Result};
use crate::math::dot;

/// First-layer activation `σ(x; w)`.
pub trait Activation: Sync {
    fn check_dims(&self, dim_x: usize, dim_w: usize) -> Result<()>;

    fn sigma(&self, x: &[f64], w: &[f64]) -> f64;

    /// Adds `scale · ∇_w σ(x; w)` into `grad` and returns `σ(x; w)`.
    fn sigma_accumulate_grad(&self, x: &[f64], w: &[f64], scale: f64, grad: &mut [f64]) -> f64;

    fn grad_w_sigma(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.sigma_accumulate_grad(x, w, 1.0, out);
    }

    /// `sup |σ|`, the boundedness constant.
    fn sup_abs(&self) -> f64;

    /// The scalar profile when `σ(x; w) = s(⟨w, x⟩)`; enables quadrature.
    fn dot_profile(&self) -> Option<&TruncatedRelu> {
        None
    }
}

/// Piecewise-linear bounded profile: `s1` below `t1`, `s2` above `t2`,
/// linear in between. At the kinks the right derivative is used, so the
/// slope is `(s2 - s1)/(t2 - t1)` on `[t1, t2)` and zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedRelu {
    s1: f64,
    s2: f64,
    t1: f64,
    t2: f64,
    slope: f64,
}

impl TruncatedRelu {
    pub fn new(s1: f64, s2: f64, t1: f64, t2: f64) -> Result<Self> {
        if ![s1, s2, t1, t2].iter().all(|v| v.is_finite()) {
            return Err(Error::config("activation parameters must be finite"));
        }
        if t1 >= t2 {
            return Err(Error::config("model.activation.t1 < t2"));
        }
        Ok(Self { s1, s2, t1, t2, slope: (s2 - s1) / (t2 - t1) })
    }

    pub fn params(&self) -> (f64, f64, f64, f64) {
        (self.s1, self.s2, self.t1, self.t2)
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        if t <= self.t1 {
            self.s1
        } else if t >= self.t2 {
            self.s2
        } else {
            self.s1 + self.slope * (t - self.t1)
        }
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        if t >= self.t1 && t < self.t2 {
            self.slope
        } else {
            0.0
        }
    }

    pub fn kinks(&self) -> (f64, f64) {
        (self.t1, self.t2)
    }

    pub fn sup_abs(&self) -> f64 {
        self.s1.abs().max(self.s2.abs())
    }

    /// Constant profile (`σ ≡ s`): zero potentials' gradients.
    pub fn is_constant(&self) -> bool {
        self.s1 == self.s2
    }
}

/// `σ(x; w) = s(⟨w, x⟩)` with a truncated-ReLU profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedReluDot(pub TruncatedRelu);

impl TruncatedReluDot {
    pub fn new(s1: f64, s2: f64, t1: f64, t2: f64) -> Result<Self> {
        TruncatedRelu::new(s1, s2, t1, t2).map(Self)
    }
}

impl Activation for TruncatedReluDot {
    fn check_dims(&self, dim_x: usize, dim_w: usize) -> Result<()> {
        check_dim(dim_x, dim_w)
    }

    #[inline]
    fn sigma(&self, x: &[f64], w: &[f64]) -> f64 {
        self.0.value(dot(w, x))
    }

    #[inline]
    fn sigma_accumulate_grad(&self, x: &[f64], w: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let z = dot(w, x);
        let s = self.0.derivative(z);
        if s != 0.0 && scale != 0.0 {
            crate::math::axpy(scale * s, x, grad);
        }
        self.0.value(z)
    }

    fn sup_abs(&self) -> f64 {
        self.0.sup_abs()
    }

    fn dot_profile(&self) -> Option<&TruncatedRelu> {
        Some(&self.0)
    }
}
