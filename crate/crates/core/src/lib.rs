//! Numerical core for cascade neural stochastic differential equations.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and an explicit seed; IO, configuration, and
//! thread pools live in the `sdecade` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod activation;
pub mod cascade_ode;
pub mod cascade_sim;
pub mod error;
pub mod fit;
pub mod fk_pde;
pub mod lie;
pub mod linalg;
pub mod math;
pub mod realization;
pub mod rng;
pub mod sde;

pub use activation::Activation;
pub use error::{Error, Result};
pub use rng::{SeedRecord, StreamLabel};
