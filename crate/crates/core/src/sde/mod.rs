//! Sampling of the weight process `dW = a(W) dt + Σ b_i(W) ∘ dV^i`.
//!
//! Linear-generator models are advanced with exact group steps
//! `exp(hA + Σ ΔV_i B_i)`; general models use the Stratonovich Heun scheme.
//! Every path draws its increments from its own RNG stream, so a path is a
//! pure function of `(model, grid, seed record)`.

mod brownian;
mod integrate;
mod model;
mod weight;

pub use brownian::BrownianIncrements;
pub use integrate::{
    exponential_step, integrate, integrate_heun, integrate_linear, ito_correction, sample_path,
    sample_path_heun, sample_path_linear, WeightTrajectory,
};
pub use model::{GeneralFields, MatrixFn, SdeKind, SdeModel, TimeGrid, VectorFn, DEFAULT_STEPS};
pub use weight::{fk_log_weight, fk_weight, Potential, PotentialFn};

pub(crate) use weight::weight_from_log;
