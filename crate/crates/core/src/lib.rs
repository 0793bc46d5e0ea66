//! Numerical core for studying the mean-field description of two-layer
//! neural networks trained by (noisy) stochastic gradient descent.
//!
//! The crate is `no_std` (it needs `alloc`) so that the dynamics, oracles and
//! kernel-limit machinery stay free of IO. Parallelism is injected through
//! [`Executor`]; every reduction runs in a fixed order so results are
//! bitwise identical for any executor.
//!
//! Module map:
//! - [`model`]: parameters, ensembles, activations, data models, population
//!   estimators, potentials `V`, `U` and the risks.
//! - [`dynamics`]: SGD, noisy SGD, GD, particle dynamics (deterministic and
//!   Langevin) and the coupling harness.
//! - [`oracle`]: large-N reference flow, 1-D Fokker–Planck grid solver,
//!   Wasserstein-2 and the finite-N gap study.
//! - [`kernel`]: tangent kernel, linearized residual dynamics, kernel ridge
//!   regression limit and the α-rescaled flow.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod math;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use math::{Executor, Sequential};
