use alloc::vec;

use crate::error::{Error, Result};
use crate::math::{norm2, sqrt};
use crate::model::{CoefficientMode, Ensemble};
use crate::rng::{Purpose, StreamRng};

/// Initial law of `θ = (a, w)`. Every family except `RadialSphere` draws
/// `w ~ N(0, I/D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSpec {
    PointMass {
        a0: f64,
    },
    /// `a ~ Unif[−a0, a0]`.
    Uniform {
        a0: f64,
    },
    /// Pairs `(+a0, w)`, `(−a0, w)`, so the initial predictor is exactly 0.
    Antithetic {
        a0: f64,
    },
    /// Fixed mode only: `w = r·e` with `e ~ Unif(S^{d−1})`, `r ~ Unif[r_lo, r_hi]`.
    RadialSphere {
        r_lo: f64,
        r_hi: f64,
    },
}

/// Draws `n` particles. Particle `i` (pair `i/2` for `Antithetic`) reads its
/// own init stream, so prefixes of larger ensembles agree.
pub fn init_sample(
    spec: InitSpec,
    n: usize,
    dim_w: usize,
    mode: CoefficientMode,
    scale: f64,
    seed: u64,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::config("dynamics.N must be ≥ 1"));
    }
    if dim_w == 0 {
        return Err(Error::config("weight dimension must be ≥ 1"));
    }
    let d = dim_w + 1;
    let sd = sqrt(1.0 / d as f64);
    let fixed = mode == CoefficientMode::Fixed;
    match spec {
        InitSpec::PointMass { a0 } | InitSpec::Uniform { a0 } | InitSpec::Antithetic { a0 } => {
            if !(a0 >= 0.0 && a0.is_finite()) {
                return Err(Error::config("init.a0 must be finite and ≥ 0"));
            }
            if fixed && spec != (InitSpec::PointMass { a0: 1.0 }) {
                return Err(Error::config("fixed-coefficient mode needs init point_mass with a0 = 1"));
            }
        }
        InitSpec::RadialSphere { r_lo, r_hi } => {
            if !fixed {
                return Err(Error::config("radial_sphere initialization is for fixed-coefficient mode"));
            }
            if !(0.0 <= r_lo && r_lo <= r_hi && r_hi.is_finite()) {
                return Err(Error::config("init radii must satisfy 0 ≤ r_lo ≤ r_hi < ∞"));
            }
        }
    }
    if matches!(spec, InitSpec::Antithetic { .. }) && n % 2 == 1 {
        return Err(Error::config("antithetic initialization needs an even N"));
    }

    let mut params = vec![0.0; n * d];
    for (i, row) in params.chunks_mut(d).enumerate() {
        let stream = match spec {
            InitSpec::Antithetic { .. } => (i / 2) as u64,
            _ => i as u64,
        };
        let mut rng = StreamRng::new(seed, Purpose::Init, stream);
        let w = &mut row[1..];
        match spec {
            InitSpec::PointMass { a0 } => {
                rng.fill_normal(w);
                w.iter_mut().for_each(|v| *v *= sd);
                row[0] = a0;
            }
            InitSpec::Uniform { a0 } => {
                rng.fill_normal(w);
                w.iter_mut().for_each(|v| *v *= sd);
                row[0] = a0 * (2.0 * rng.uniform() - 1.0);
            }
            InitSpec::Antithetic { a0 } => {
                rng.fill_normal(w);
                w.iter_mut().for_each(|v| *v *= sd);
                row[0] = if i % 2 == 0 { a0 } else { -a0 };
            }
            InitSpec::RadialSphere { r_lo, r_hi } => {
                let r = r_lo + (r_hi - r_lo) * rng.uniform();
                rng.fill_normal(w);
                let len = norm2(w);
                w.iter_mut().for_each(|v| *v *= r / len);
                row[0] = 1.0;
            }
        }
    }
    Ensemble::from_flat(dim_w, params, mode, scale)
}
