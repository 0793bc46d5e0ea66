//! Neurons, ensembles, activations, data models and the population
//! functionals built on them.
//!
//! A neuron is `θ = (a, w)` with `D = 1 + dim(w)`. An [`Ensemble`] stores `N`
//! neurons row-major as `[a, w_1, .., w_{D-1}]`, together with the
//! coefficient mode and the output scale `α` of
//! `f̂_{α,N}(x; θ) = (α/N) Σ_i a_i σ(x; w_i)`.

mod activation;
mod analytic;
mod data;
mod ensemble;
mod estimator;
mod risk;

pub use activation::{Activation, TruncatedRelu, TruncatedReluDot};
pub use data::{AnisotropicGaussians, DataModel, EmpiricalDataset, FrozenSet, Rotation};
pub use ensemble::{CoefficientMode, Ensemble, Parameter};
pub use estimator::{EstimatorStrategy, PopulationEstimator};
pub use risk::{
    grad1_potential_u_theta, grad_potential_v_theta, grad_sigma_star, pair_interaction_sums, pair_theta_grads,
    particle_order, potential_u_theta, potential_v_theta, predict, predictions_on, risk_particles, risk_population_mc,
    sigma_star, PairSums,
};
