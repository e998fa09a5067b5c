use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::brownian::BrownianIncrements;
use super::model::{SdeKind, SdeModel, TimeGrid};
use crate::error::{Error, Result};
use crate::lie::Generators;
use crate::linalg;
use crate::rng::SeedRecord;

/// A sampled weight path `W_{t_0}, …, W_{t_K}` with the increments that drove it.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTrajectory {
    pub grid: TimeGrid,
    pub states: Vec<DMatrix<f64>>,
    pub increments: BrownianIncrements,
}

impl WeightTrajectory {
    pub fn seed(&self) -> Option<SeedRecord> {
        self.increments.seed()
    }

    pub fn terminal(&self) -> &DMatrix<f64> {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Linear interpolation between grid nodes.
    pub fn state_at(&self, t: f64) -> DMatrix<f64> {
        let (k, lambda) = locate(&self.grid, t);
        if lambda == 0.0 {
            return self.states[k].clone();
        }
        &self.states[k] * (1.0 - lambda) + &self.states[k + 1] * lambda
    }

    /// The piecewise-linear interpolant of this path sampled on a grid with
    /// `factor` times as many steps. Increments are split evenly, consistent
    /// with a linearly interpolated driving path.
    pub fn resample_linear(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("resampling factor must be positive".into()));
        }
        let grid = self.grid.refined(factor);
        let mut states = Vec::with_capacity(grid.steps() + 1);
        for k in 0..self.grid.steps() {
            for r in 0..factor {
                let lambda = r as f64 / factor as f64;
                states.push(&self.states[k] * (1.0 - lambda) + &self.states[k + 1] * lambda);
            }
        }
        states.push(self.terminal().clone());
        let m = self.increments.noise_dim();
        let mut values = Vec::with_capacity(grid.steps() * m);
        for k in 0..self.grid.steps() {
            for _ in 0..factor {
                values.extend(self.increments.step(k).iter().map(|v| v / factor as f64));
            }
        }
        Ok(Self {
            grid,
            states,
            increments: BrownianIncrements::from_values(grid, m, values)?,
        })
    }
}

/// Interval index and fraction for time `t`, clamped to the grid.
pub(crate) fn locate(grid: &TimeGrid, t: f64) -> (usize, f64) {
    let s = ((t - grid.t0()) / grid.h()).clamp(0.0, grid.steps() as f64);
    let k = libm::floor(s) as usize;
    if k >= grid.steps() {
        return (grid.steps() - 1, 1.0);
    }
    (k, s - k as f64)
}

fn check_increments(model: &SdeModel, grid: &TimeGrid, inc: &BrownianIncrements) -> Result<()> {
    if inc.noise_dim() != model.noise_dim() {
        return Err(Error::DimensionMismatch {
            context: "noise channels",
            expected: model.noise_dim(),
            found: inc.noise_dim(),
        });
    }
    if inc.grid() != grid {
        return Err(Error::InvalidArgument(
            "increments were sampled on a different time grid".into(),
        ));
    }
    Ok(())
}

fn guard(state: &DMatrix<f64>, inc: &BrownianIncrements, step: usize) -> Result<()> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            seed: inc.seed().unwrap_or(SeedRecord::new(0, 0)),
            step,
        })
    }
}

/// One exponential step `W ↦ exp(hA + Σ ΔV_i B_i) W`.
pub fn exponential_step(
    gens: &Generators,
    h: f64,
    dv: &[f64],
    w: &DMatrix<f64>,
    use_rodrigues: bool,
) -> DMatrix<f64> {
    let mut omega = &gens.drift * h;
    for (b, d) in gens.diffusion.iter().zip(dv) {
        omega += b * *d;
    }
    let e = if use_rodrigues {
        linalg::expm_skew3(&omega)
    } else {
        linalg::expm(&omega)
    };
    e * w
}

/// Exponential Lie-group integrator on given increments.
///
/// Each step multiplies by the exponential of an element of the algebra
/// spanned by the generators, so skew generators keep a unit vector on the
/// sphere and an orthogonal matrix in `O(n)` up to roundoff.
pub fn integrate_linear(
    model: &SdeModel,
    grid: &TimeGrid,
    increments: &BrownianIncrements,
) -> Result<WeightTrajectory> {
    let SdeKind::Linear(gens) = model.kind() else {
        return Err(Error::InvalidArgument(
            "the exponential integrator needs a linear-generator model".into(),
        ));
    };
    check_increments(model, grid, increments)?;
    let rodrigues = gens.n() == 3 && gens.is_skew();
    let h = grid.h();
    let mut states = Vec::with_capacity(grid.steps() + 1);
    states.push(model.w0().clone());
    for k in 0..grid.steps() {
        let next = exponential_step(gens, h, increments.step(k), &states[k], rodrigues);
        guard(&next, increments, k + 1)?;
        states.push(next);
    }
    Ok(WeightTrajectory {
        grid: *grid,
        states,
        increments: increments.clone(),
    })
}

/// Stratonovich Heun (predictor–corrector) integrator on given increments.
pub fn integrate_heun(
    model: &SdeModel,
    grid: &TimeGrid,
    increments: &BrownianIncrements,
) -> Result<WeightTrajectory> {
    check_increments(model, grid, increments)?;
    let h = grid.h();
    let m = model.noise_dim();
    let mut states = Vec::with_capacity(grid.steps() + 1);
    states.push(model.w0().clone());
    for k in 0..grid.steps() {
        let w = &states[k];
        let dv = increments.step(k);
        let a0 = model.drift_at(w);
        let b0: Vec<DMatrix<f64>> = (0..m).map(|i| model.diffusion_at(i, w)).collect();
        let mut pred = w + &a0 * h;
        for (b, d) in b0.iter().zip(dv) {
            pred += b * *d;
        }
        let a1 = model.drift_at(&pred);
        let mut next = w + (a0 + a1) * (0.5 * h);
        for (i, d) in dv.iter().enumerate() {
            next += (&b0[i] + model.diffusion_at(i, &pred)) * (0.5 * d);
        }
        guard(&next, increments, k + 1)?;
        states.push(next);
    }
    Ok(WeightTrajectory {
        grid: *grid,
        states,
        increments: increments.clone(),
    })
}

pub fn sample_path_linear(
    model: &SdeModel,
    grid: &TimeGrid,
    seed: SeedRecord,
) -> Result<WeightTrajectory> {
    let inc = BrownianIncrements::sample(*grid, model.noise_dim(), seed);
    integrate_linear(model, grid, &inc)
}

pub fn sample_path_heun(
    model: &SdeModel,
    grid: &TimeGrid,
    seed: SeedRecord,
) -> Result<WeightTrajectory> {
    let inc = BrownianIncrements::sample(*grid, model.noise_dim(), seed);
    integrate_heun(model, grid, &inc)
}

/// Exponential integrator for linear models, Heun otherwise.
pub fn sample_path(model: &SdeModel, grid: &TimeGrid, seed: SeedRecord) -> Result<WeightTrajectory> {
    let inc = BrownianIncrements::sample(*grid, model.noise_dim(), seed);
    integrate(model, grid, &inc)
}

/// [`sample_path`] on caller-supplied increments.
pub fn integrate(
    model: &SdeModel,
    grid: &TimeGrid,
    increments: &BrownianIncrements,
) -> Result<WeightTrajectory> {
    match model.kind() {
        SdeKind::Linear(_) => integrate_linear(model, grid, increments),
        SdeKind::General(_) => integrate_heun(model, grid, increments),
    }
}

/// Itô-corrected drift `ã(w) = a(w) + ½ Σ (∂b_i/∂w) b_i(w)`.
///
/// For linear models this is `(A + ½ Σ B_i²) w`.
pub fn ito_correction(model: &SdeModel, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match model.kind() {
        SdeKind::Linear(g) => {
            if w.nrows() != g.n() {
                return Err(Error::DimensionMismatch {
                    context: "state rows",
                    expected: g.n(),
                    found: w.nrows(),
                });
            }
            let mut corrected = g.drift.clone();
            for b in &g.diffusion {
                corrected += (b * b) * 0.5;
            }
            Ok(corrected * w)
        }
        SdeKind::General(f) => {
            if w.len() != f.dim {
                return Err(Error::DimensionMismatch {
                    context: "state",
                    expected: f.dim,
                    found: w.len(),
                });
            }
            let v = nalgebra::DVector::from_column_slice(w.as_slice());
            let mut out = (f.drift)(&v);
            for (i, b) in f.diffusion.iter().enumerate() {
                let jac = f
                    .diffusion_jacobians
                    .as_ref()
                    .map(|j| &j[i])
                    .ok_or(Error::MissingJacobian(i))?;
                out += jac(&v) * b(&v) * 0.5;
            }
            Ok(DMatrix::from_column_slice(out.len(), 1, out.as_slice()))
        }
    }
}
