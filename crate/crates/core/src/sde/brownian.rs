use alloc::vec::Vec;

use super::model::TimeGrid;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::{standard_normal, SeedRecord};

/// Brownian increments `ΔV^i_k`, `k < steps`, `i < m`, stored step-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianIncrements {
    grid: TimeGrid,
    m: usize,
    values: Vec<f64>,
    seed: Option<SeedRecord>,
}

impl BrownianIncrements {
    /// Independent `N(0, h I_m)` increments drawn from `seed`'s stream.
    pub fn sample(grid: TimeGrid, m: usize, seed: SeedRecord) -> Self {
        let mut rng = seed.rng();
        let sd = math::sqrt(grid.h());
        let values = (0..grid.steps() * m)
            .map(|_| sd * standard_normal(&mut rng))
            .collect();
        Self {
            grid,
            m,
            values,
            seed: Some(seed),
        }
    }

    pub fn from_values(grid: TimeGrid, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() * m {
            return Err(Error::DimensionMismatch {
                context: "Brownian increments",
                expected: grid.steps() * m,
                found: values.len(),
            });
        }
        Ok(Self {
            grid,
            m,
            values,
            seed: None,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> Option<SeedRecord> {
        self.seed
    }

    /// Increments of step `k`, one per noise channel.
    pub fn step(&self, k: usize) -> &[f64] {
        &self.values[k * self.m..(k + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Path `V^i` at the grid nodes, starting from 0.
    pub fn cumulative(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.steps() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for k in 0..self.grid.steps() {
            acc += self.values[k * self.m + i];
            out.push(acc);
        }
        out
    }

    /// Halve every step with the Lévy midpoint construction: the midpoint of
    /// each interval is drawn from the Brownian bridge, so the refined path
    /// passes through every original node.
    pub fn refine(&self, seed: SeedRecord) -> Self {
        let mut rng = seed.rng();
        let half_sd = 0.5 * math::sqrt(self.grid.h());
        let fine = self.grid.refined(2);
        let mut values = Vec::with_capacity(2 * self.values.len());
        for k in 0..self.grid.steps() {
            let mut right = Vec::with_capacity(self.m);
            for &dv in self.step(k) {
                let left = 0.5 * dv + half_sd * standard_normal(&mut rng);
                values.push(left);
                right.push(dv - left);
            }
            values.extend_from_slice(&right);
        }
        Self {
            grid: fine,
            m: self.m,
            values,
            seed: self.seed,
        }
    }
}
