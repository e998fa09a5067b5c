use alloc::sync::Arc;
use core::fmt;
use nalgebra::DMatrix;

use super::integrate::{locate, WeightTrajectory};
use super::model::TimeGrid;
use crate::error::{Error, Result};
use crate::math;

/// Largest log-weight whose exponential is finite.
const MAX_LOG_WEIGHT: f64 = 709.0;

pub type PotentialFn = Arc<dyn Fn(&DMatrix<f64>, f64) -> f64 + Send + Sync>;

/// The potential `h(w, t)` of the Feynman–Kac weight `exp(∫ h(W_t, t) dt)`.
#[derive(Clone)]
pub enum Potential {
    Zero,
    Constant(f64),
    /// `h(w, t) = −|w − ξ_t|²` for a reference path `ξ`, linear between nodes.
    Reference(Arc<WeightTrajectory>),
    Custom(PotentialFn),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::Constant(c) => write!(f, "Constant({c})"),
            Potential::Reference(_) => write!(f, "Reference(..)"),
            Potential::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

fn neg_sq_distance(w: &DMatrix<f64>, xi: &DMatrix<f64>) -> f64 {
    -w.iter().zip(xi.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

impl Potential {
    pub fn eval(&self, w: &DMatrix<f64>, t: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(c) => *c,
            Potential::Reference(xi) => {
                let (k, lambda) = locate(&xi.grid, t);
                if lambda == 0.0 {
                    neg_sq_distance(w, &xi.states[k])
                } else {
                    neg_sq_distance(w, &xi.state_at(t))
                }
            }
            Potential::Custom(f) => f(w, t),
        }
    }

    /// `h` at node `k` of `grid`; reference paths on the same grid are read
    /// at the node itself rather than interpolated.
    fn eval_node(&self, w: &DMatrix<f64>, grid: &TimeGrid, k: usize) -> f64 {
        match self {
            Potential::Reference(xi) if xi.grid == *grid => neg_sq_distance(w, &xi.states[k]),
            _ => self.eval(w, grid.time(k)),
        }
    }

    pub fn eval_scalar(&self, w: f64, t: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(c) => *c,
            _ => self.eval(&DMatrix::from_element(1, 1, w), t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }
}

/// `∫ h(W_t, t) dt` by the trapezoid rule on the trajectory's own grid.
/// A constant potential integrates exactly to `c·(t1 − t0)`.
pub fn fk_log_weight(traj: &WeightTrajectory, potential: &Potential) -> Result<f64> {
    let grid = &traj.grid;
    match potential {
        Potential::Zero => return Ok(0.0),
        Potential::Constant(c) => {
            if !c.is_finite() {
                return Err(Error::NonFiniteInput("potential"));
            }
            return Ok(c * (grid.t1() - grid.t0()));
        }
        _ => {}
    }
    let mut prev = potential.eval_node(&traj.states[0], grid, 0);
    let mut acc = 0.0;
    for k in 1..=grid.steps() {
        let cur = potential.eval_node(&traj.states[k], grid, k);
        if !prev.is_finite() || !cur.is_finite() {
            return Err(Error::NonFiniteInput("potential"));
        }
        acc += 0.5 * (prev + cur);
        prev = cur;
    }
    Ok(acc * grid.h())
}

/// `exp(∫ h(W_t, t) dt)`, rejecting weights that overflow.
pub fn fk_weight(traj: &WeightTrajectory, potential: &Potential) -> Result<f64> {
    let log_w = fk_log_weight(traj, potential)?;
    weight_from_log(log_w)
}

pub(crate) fn weight_from_log(log_w: f64) -> Result<f64> {
    if log_w > MAX_LOG_WEIGHT {
        return Err(Error::WeightOverflow(log_w));
    }
    Ok(math::exp(log_w))
}
