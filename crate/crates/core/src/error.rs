use alloc::string::String;

use crate::rng::SeedRecord;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value at step {step} (seed={} stream={})", .seed.seed, .seed.stream)]
    NonFinite { seed: SeedRecord, step: usize },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("diffusion field {0} has no Jacobian; Itô correction needs one")]
    MissingJacobian(usize),
    #[error("activation `{name}` cannot be differentiated to order {order}")]
    NotDifferentiable { name: String, order: usize },
    #[error("bracket depth {depth} exceeds the maximum nesting depth {max}")]
    DepthExceeded { depth: usize, max: usize },
    #[error("singular linear system in {0}")]
    Singular(&'static str),
    #[error("Feynman-Kac weight overflows (log-weight {0})")]
    WeightOverflow(f64),
    #[error("{0}")]
    Configuration(String),
    #[error("loss diverged at iteration {iteration} (loss trace: {losses:?})")]
    Diverged {
        iteration: usize,
        losses: alloc::vec::Vec<f64>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
