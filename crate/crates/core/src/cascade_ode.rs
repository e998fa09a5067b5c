//! The activation ODE `dZ/dt = σ(W_t Z)`, `Z₀ = x`, driven by a sampled
//! weight trajectory, and the realized function `E[vᵀZ₁]`.
//!
//! The weight path is generated first and the ODE is solved conditionally on
//! it; the time-ordered exponential is represented by time stepping only.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::realization::{realize_mc_with, PathMap, ReadoutSpec, RealizationEstimate, Sequential};
use crate::rng::SeedRecord;
use crate::sde::{Potential, SdeModel, TimeGrid, WeightTrajectory};

/// Activations `Z_{t_k}` on the grid of the driving weight trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationPath {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    pub source: Option<SeedRecord>,
}

impl ActivationPath {
    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("activation path is never empty")
    }
}

fn field(w: &DMatrix<f64>, z: &DVector<f64>, sigma: &Activation) -> DVector<f64> {
    (w * z).map(|r| sigma.value(r))
}

/// Classical RK4 on the weight grid; `W` at half steps is the average of
/// the neighbouring nodes.
pub fn solve_activation(
    traj: &WeightTrajectory,
    x: &DVector<f64>,
    sigma: &Activation,
) -> Result<ActivationPath> {
    let (rows, cols) = traj.states[0].shape();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            context: "activation weights (square)",
            expected: rows,
            found: cols,
        });
    }
    if x.len() != rows {
        return Err(Error::DimensionMismatch {
            context: "activation initial state",
            expected: rows,
            found: x.len(),
        });
    }
    let h = traj.grid.h();
    let mut states = Vec::with_capacity(traj.states.len());
    states.push(x.clone());
    for k in 0..traj.grid.steps() {
        let w0 = &traj.states[k];
        let w1 = &traj.states[k + 1];
        let mid = (w0 + w1) * 0.5;
        let z = &states[k];
        let k1 = field(w0, z, sigma);
        let k2 = field(&mid, &(z + &k1 * (0.5 * h)), sigma);
        let k3 = field(&mid, &(z + &k2 * (0.5 * h)), sigma);
        let k4 = field(w1, &(z + &k3 * h), sigma);
        let next = z + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                seed: traj.seed().unwrap_or(SeedRecord::new(0, 0)),
                step: k + 1,
            });
        }
        states.push(next);
    }
    Ok(ActivationPath {
        grid: traj.grid,
        states,
        source: traj.seed(),
    })
}

pub fn realize_cascade_mc(
    model: &SdeModel,
    v: &DVector<f64>,
    sigma: &Activation,
    x: &DVector<f64>,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<RealizationEstimate> {
    realize_cascade_mc_with(&Sequential, model, v, sigma, x, n, grid, seed)
}

/// Monte Carlo estimate of `E[vᵀZ₁]` over `n` weight trajectories.
#[allow(clippy::too_many_arguments)]
pub fn realize_cascade_mc_with<P: PathMap>(
    exec: &P,
    model: &SdeModel,
    v: &DVector<f64>,
    sigma: &Activation,
    x: &DVector<f64>,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<RealizationEstimate> {
    let readout = ReadoutSpec::CascadeLinear {
        v: v.clone(),
        sigma: *sigma,
    };
    realize_mc_with(exec, model, &readout, &Potential::Zero, x, n, grid, seed)
}
