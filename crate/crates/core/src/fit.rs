//! Fitting `θ` so the realized function matches a regression dataset.
//!
//! The loss is the mean squared error over the dataset, evaluated with
//! common random numbers: every evaluation samples its paths from the same
//! master seed, so `θ ↦ loss(θ)` is a smooth deterministic function and
//! finite differences of it are meaningful.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::{MatrixBasis, ThetaParams};
use crate::math;
use crate::realization::{PathEnsemble, PathMap, ReadoutSpec, Sequential};
use crate::rng::{standard_normal, SeedRecord, StreamLabel};
use crate::sde::{Potential, SdeModel, TimeGrid};

/// Tolerance on `|x| = 1` for sphere-flagged inputs.
pub const SPHERE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<DVector<f64>>,
    targets: Vec<f64>,
    on_sphere: bool,
}

impl Dataset {
    pub fn new(inputs: Vec<DVector<f64>>, targets: Vec<f64>, on_sphere: bool) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset targets",
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let dim = inputs[0].len();
        for x in &inputs {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "dataset inputs",
                    expected: dim,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput("dataset input"));
            }
            if on_sphere && (x.norm() - 1.0).abs() > SPHERE_TOLERANCE {
                return Err(Error::InvalidArgument(alloc::format!(
                    "sphere-flagged input has norm {}",
                    x.norm()
                )));
            }
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFiniteInput("dataset target"));
        }
        Ok(Self {
            inputs,
            targets,
            on_sphere,
        })
    }

    /// Label inputs with a target function.
    pub fn from_fn(inputs: Vec<DVector<f64>>, on_sphere: bool, f: impl Fn(&DVector<f64>) -> f64) -> Result<Self> {
        let targets = inputs.iter().map(f).collect();
        Self::new(inputs, targets, on_sphere)
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn on_sphere(&self) -> bool {
        self.on_sphere
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Population variance of the targets: the MSE of the best constant
    /// predictor.
    pub fn target_variance(&self) -> f64 {
        let n = self.targets.len() as f64;
        let mean = math::pairwise_sum(&self.targets) / n;
        let sq: Vec<f64> = self.targets.iter().map(|y| (y - mean) * (y - mean)).collect();
        math::pairwise_sum(&sq) / n
    }
}

/// `count` points uniform on `S^{dim−1}`, drawn from the dataset stream of `seed`.
pub fn sphere_inputs(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = SeedRecord::labeled(seed, StreamLabel::Dataset, 0).rng();
    (0..count)
        .map(|_| loop {
            let v = DVector::from_fn(dim, |_, _| standard_normal(&mut rng));
            let norm = v.norm();
            if norm > 1e-8 {
                break v / norm;
            }
        })
        .collect()
}

/// Everything except `θ` that defines the realized function.
#[derive(Clone, Debug)]
pub struct FitProblem {
    pub basis: MatrixBasis,
    pub w0: DMatrix<f64>,
    pub readout: ReadoutSpec,
    pub potential: Potential,
    pub grid: TimeGrid,
    /// Paths per loss evaluation.
    pub paths: usize,
    /// Master seed shared by every evaluation.
    pub seed: u64,
}

impl FitProblem {
    pub fn model(&self, theta: &ThetaParams) -> Result<SdeModel> {
        SdeModel::linear_from_theta(theta, &self.basis, self.w0.clone())
    }

    pub fn predict_with<P: PathMap>(&self, exec: &P, theta: &ThetaParams, inputs: &[DVector<f64>]) -> Result<Vec<f64>> {
        let ens = PathEnsemble::sample_with(
            exec,
            &self.model(theta)?,
            &self.potential,
            self.paths,
            &self.grid,
            self.seed,
            self.readout.needs_path(),
        )?;
        inputs
            .iter()
            .map(|x| Ok(ens.estimate_with(exec, &self.readout, x)?.mean))
            .collect()
    }

    pub fn loss_with<P: PathMap>(&self, exec: &P, theta: &ThetaParams, data: &Dataset) -> Result<f64> {
        let pred = self.predict_with(exec, theta, data.inputs())?;
        Ok(mse(&pred, data.targets()))
    }

    pub fn loss(&self, theta: &ThetaParams, data: &Dataset) -> Result<f64> {
        self.loss_with(&Sequential, theta, data)
    }
}

pub fn mse(pred: &[f64], targets: &[f64]) -> f64 {
    let sq: Vec<f64> = pred.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).collect();
    math::pairwise_sum(&sq) / sq.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum on central differences
    /// `(L(θ + δe_k) − L(θ − δe_k)) / 2δ`.
    CentralDifference {
        learning_rate: f64,
        step: f64,
        momentum: f64,
    },
    /// Simultaneous perturbation: gain `a / (k + 1 + stability)^alpha`,
    /// perturbation `c / (k + 1)^gamma` along a Rademacher direction.
    Spsa {
        a: f64,
        c: f64,
        alpha: f64,
        gamma: f64,
        stability: f64,
    },
}

impl Optimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::CentralDifference { .. } => "central_difference",
            Optimizer::Spsa { .. } => "spsa",
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Optimizer::CentralDifference {
                learning_rate,
                step,
                momentum,
            } => learning_rate > 0.0 && step > 0.0 && (0.0..1.0).contains(&momentum),
            Optimizer::Spsa {
                a,
                c,
                alpha,
                gamma,
                stability,
            } => a > 0.0 && c > 0.0 && alpha > 0.0 && gamma > 0.0 && stability >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Configuration(alloc::format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitTrace {
    /// `losses[k]` is the loss at the `k`-th iterate; `losses[0]` is the start.
    pub losses: Vec<f64>,
    pub theta: ThetaParams,
}

impl FitTrace {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace holds the initial loss")
    }
}

pub fn fit(
    problem: &FitProblem,
    data: &Dataset,
    theta0: &ThetaParams,
    optimizer: &Optimizer,
    iterations: usize,
) -> Result<FitTrace> {
    fit_with(&Sequential, problem, data, theta0, optimizer, iterations)
}

/// Run `iterations` optimizer steps from `theta0`. A non-finite loss aborts
/// with the trace so far.
pub fn fit_with<P: PathMap>(
    exec: &P,
    problem: &FitProblem,
    data: &Dataset,
    theta0: &ThetaParams,
    optimizer: &Optimizer,
    iterations: usize,
) -> Result<FitTrace> {
    optimizer.validate()?;
    let p = theta0.as_slice().len();
    let mut theta: Vec<f64> = theta0.as_slice().to_vec();
    let mut losses = Vec::with_capacity(iterations + 1);
    let mut velocity = alloc::vec![0.0; p];
    let loss_at = |coeffs: &[f64]| problem.loss_with(exec, &theta0.with_coeffs(coeffs)?, data);
    let check = |loss: f64, iteration: usize, losses: &Vec<f64>| {
        if loss.is_finite() {
            Ok(())
        } else {
            let mut trace = losses.clone();
            trace.push(loss);
            Err(Error::Diverged {
                iteration,
                losses: trace,
            })
        }
    };
    let mut loss = diverged_on_error(loss_at(&theta), 0, &losses)?;
    check(loss, 0, &losses)?;
    losses.push(loss);
    for k in 0..iterations {
        let gradient = match *optimizer {
            Optimizer::CentralDifference { step, .. } => {
                let mut g = alloc::vec![0.0; p];
                for (j, gj) in g.iter_mut().enumerate() {
                    let mut plus = theta.clone();
                    let mut minus = theta.clone();
                    plus[j] += step;
                    minus[j] -= step;
                    let lp = diverged_on_error(loss_at(&plus), k + 1, &losses)?;
                    let lm = diverged_on_error(loss_at(&minus), k + 1, &losses)?;
                    *gj = (lp - lm) / (2.0 * step);
                }
                g
            }
            Optimizer::Spsa { c, gamma, .. } => {
                let ck = c / libm::pow((k + 1) as f64, gamma);
                let mut rng = SeedRecord::labeled(problem.seed, StreamLabel::Optimizer, k as u64).rng();
                let delta: Vec<f64> = (0..p)
                    .map(|_| if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 })
                    .collect();
                let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + ck * d).collect();
                let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - ck * d).collect();
                let lp = diverged_on_error(loss_at(&plus), k + 1, &losses)?;
                let lm = diverged_on_error(loss_at(&minus), k + 1, &losses)?;
                delta.iter().map(|d| (lp - lm) / (2.0 * ck) * d).collect()
            }
        };
        if gradient.iter().any(|g| !g.is_finite()) {
            check(f64::NAN, k + 1, &losses)?;
        }
        match *optimizer {
            Optimizer::CentralDifference {
                learning_rate,
                momentum,
                ..
            } => {
                for j in 0..p {
                    velocity[j] = momentum * velocity[j] - learning_rate * gradient[j];
                    theta[j] += velocity[j];
                }
            }
            Optimizer::Spsa { a, alpha, stability, .. } => {
                let ak = a / libm::pow(k as f64 + 1.0 + stability, alpha);
                for j in 0..p {
                    theta[j] -= ak * gradient[j];
                }
            }
        }
        loss = diverged_on_error(loss_at(&theta), k + 1, &losses)?;
        check(loss, k + 1, &losses)?;
        losses.push(loss);
    }
    Ok(FitTrace {
        losses,
        theta: theta0.with_coeffs(&theta)?,
    })
}

/// Sampling failures mid-fit (a path blowing up) are reported as divergence.
fn diverged_on_error(r: Result<f64>, iteration: usize, losses: &[f64]) -> Result<f64> {
    match r {
        Err(Error::NonFinite { .. }) | Err(Error::WeightOverflow(_)) => {
            let mut trace = losses.to_vec();
            trace.push(f64::NAN);
            Err(Error::Diverged {
                iteration,
                losses: trace,
            })
        }
        other => other,
    }
}
