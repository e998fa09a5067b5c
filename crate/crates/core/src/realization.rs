//! Monte Carlo realization of `f(x;θ) = E[exp(∫₀¹ h(W_t,t) dt) · readout(W, x)]`.
//!
//! Each path shares one trajectory between its Feynman–Kac weight and its
//! readout. Per-path values are reduced with [`math::pairwise_sum`], whose
//! shape depends only on the sample count, so an estimate is a deterministic
//! function of `(master seed, N)` regardless of how paths were scheduled.

use alloc::sync::Arc;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::activation::Activation;
use crate::cascade_ode::solve_activation;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::SeedRecord;
use crate::sde::{fk_log_weight, sample_path, weight_from_log, Potential, SdeModel, TimeGrid, WeightTrajectory};

/// Evaluates per-path closures, possibly in parallel. Implementations must
/// return results in index order.
pub trait PathMap: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// In-order, single-threaded [`PathMap`].
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl PathMap for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// How the terminal state (or the whole path) becomes an output `Y`.
#[derive(Clone, Debug, PartialEq)]
pub enum ReadoutSpec {
    /// `σ(Wᵀx)` for a vector state `W ∈ Rⁿ`.
    ScalarNeuron { sigma: Activation },
    /// `vᵀσ(Wx)` for a matrix state `W ∈ R^{p×n}`.
    VectorNeuron { v: DVector<f64>, sigma: Activation },
    /// `Uᵀσ(W̃x)` for a state `[U | W̃] ∈ R^{p×(1+n)}`: column 0 is `U`.
    TwoBlock { sigma: Activation },
    /// `vᵀZ₁` where `dZ/dt = σ(W_t Z)`, `Z₀ = x`, for `W ∈ R^{n×n}`.
    CascadeLinear { v: DVector<f64>, sigma: Activation },
}

impl ReadoutSpec {
    /// Check the readout against a state shape `(rows, cols)`.
    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        let (rows, cols) = shape;
        let mismatch = |context, expected, found| {
            Err(Error::DimensionMismatch {
                context,
                expected,
                found,
            })
        };
        match self {
            ReadoutSpec::ScalarNeuron { .. } if cols != 1 => {
                mismatch("scalar-neuron readout state columns", 1, cols)
            }
            ReadoutSpec::VectorNeuron { v, .. } | ReadoutSpec::CascadeLinear { v, .. }
                if v.iter().any(|c| !c.is_finite()) =>
            {
                Err(Error::NonFiniteInput("readout vector"))
            }
            ReadoutSpec::VectorNeuron { v, .. } if v.len() != rows => {
                mismatch("vector-neuron readout v", rows, v.len())
            }
            ReadoutSpec::TwoBlock { .. } if cols < 2 => {
                mismatch("two-block readout state columns", 2, cols)
            }
            ReadoutSpec::CascadeLinear { .. } if rows != cols => {
                mismatch("cascade readout (square weights)", rows, cols)
            }
            ReadoutSpec::CascadeLinear { v, .. } if v.len() != rows => {
                mismatch("cascade readout v", rows, v.len())
            }
            _ => Ok(()),
        }
    }

    /// Dimension of the input `x` for a given state shape.
    pub fn input_dim(&self, shape: (usize, usize)) -> usize {
        match self {
            ReadoutSpec::ScalarNeuron { .. } | ReadoutSpec::CascadeLinear { .. } => shape.0,
            ReadoutSpec::VectorNeuron { .. } => shape.1,
            ReadoutSpec::TwoBlock { .. } => shape.1 - 1,
        }
    }

    /// Whether the readout needs the whole trajectory rather than `W₁` alone.
    pub fn needs_path(&self) -> bool {
        matches!(self, ReadoutSpec::CascadeLinear { .. })
    }

    pub fn sigma(&self) -> Activation {
        match self {
            ReadoutSpec::ScalarNeuron { sigma }
            | ReadoutSpec::VectorNeuron { sigma, .. }
            | ReadoutSpec::TwoBlock { sigma }
            | ReadoutSpec::CascadeLinear { sigma, .. } => *sigma,
        }
    }

    /// Readout of a terminal state. Path-dependent readouts are rejected.
    pub fn evaluate_terminal(&self, w: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
        match self {
            ReadoutSpec::ScalarNeuron { sigma } => {
                let mut acc = 0.0;
                for (wi, xi) in w.iter().zip(x.iter()) {
                    acc += wi * xi;
                }
                Ok(sigma.value(acc))
            }
            ReadoutSpec::VectorNeuron { v, sigma } => Ok(neuron_layer(v.iter(), w, 0, x, sigma)),
            ReadoutSpec::TwoBlock { sigma } => {
                Ok(neuron_layer(w.column(0).iter(), w, 1, x, sigma))
            }
            ReadoutSpec::CascadeLinear { .. } => Err(Error::InvalidArgument(
                "the cascade readout needs the full weight trajectory".into(),
            )),
        }
    }

    pub fn evaluate(&self, traj: &WeightTrajectory, x: &DVector<f64>) -> Result<f64> {
        match self {
            ReadoutSpec::CascadeLinear { v, sigma } => {
                let path = solve_activation(traj, x, sigma)?;
                Ok(v.dot(path.terminal()))
            }
            _ => self.evaluate_terminal(traj.terminal(), x),
        }
    }

    fn check_input(&self, shape: (usize, usize), x: &DVector<f64>) -> Result<()> {
        self.validate(shape)?;
        let expected = self.input_dim(shape);
        if x.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "input x",
                expected,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("input x"));
        }
        Ok(())
    }
}

/// `Σ_i u_i σ((W x)_i)` with `W` taken from column `offset` onward.
fn neuron_layer<'a>(
    u: impl Iterator<Item = &'a f64>,
    w: &DMatrix<f64>,
    offset: usize,
    x: &DVector<f64>,
    sigma: &Activation,
) -> f64 {
    let mut out = 0.0;
    for (i, ui) in u.enumerate() {
        let mut pre = 0.0;
        for (j, xj) in x.iter().enumerate() {
            pre += w[(i, offset + j)] * xj;
        }
        out += ui * sigma.value(pre);
    }
    out
}

/// Mean and standard error of a realized function value.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√N`.
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub grid: TimeGrid,
}

impl RealizationEstimate {
    fn from_values(values: &[f64], seed: u64, grid: TimeGrid) -> Result<Self> {
        let (mean, stderr) = math::mean_and_stderr(values);
        let stderr = stderr.ok_or_else(|| {
            Error::InvalidArgument("a standard error needs at least two samples".into())
        })?;
        Ok(Self {
            mean,
            stderr,
            samples: values.len(),
            seed,
            grid,
        })
    }
}

/// Weighted readout of one path: `exp(∫h) · Y`.
pub fn path_value(
    model: &SdeModel,
    readout: &ReadoutSpec,
    potential: &Potential,
    x: &DVector<f64>,
    grid: &TimeGrid,
    record: SeedRecord,
) -> Result<f64> {
    let traj = sample_path(model, grid, record)?;
    let weight = weight_from_log(fk_log_weight(&traj, potential)?)?;
    finite(weight * readout.evaluate(&traj, x)?, record, grid.steps())
}

fn finite(v: f64, seed: SeedRecord, step: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { seed, step })
    }
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn check_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "Monte Carlo estimate needs N >= 2, got {n}"
        )));
    }
    Ok(())
}

/// [`realize_mc_with`] on the calling thread.
pub fn realize_mc(
    model: &SdeModel,
    readout: &ReadoutSpec,
    potential: &Potential,
    x: &DVector<f64>,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<RealizationEstimate> {
    realize_mc_with(&Sequential, model, readout, potential, x, n, grid, seed)
}

/// Estimate `f(x;θ)` from `n` independent paths; path `ν` uses stream `ν`
/// of `seed`, so two calls with the same seed share random numbers.
#[allow(clippy::too_many_arguments)]
pub fn realize_mc_with<P: PathMap>(
    exec: &P,
    model: &SdeModel,
    readout: &ReadoutSpec,
    potential: &Potential,
    x: &DVector<f64>,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<RealizationEstimate> {
    check_samples(n)?;
    readout.check_input(model.state_shape(), x)?;
    let values = first_error(exec.map(n, |nu| {
        path_value(model, readout, potential, x, grid, SeedRecord::path(seed, nu as u64))
    }))?;
    RealizationEstimate::from_values(&values, seed, *grid)
}

#[derive(Clone, Debug)]
struct EnsembleEntry {
    weight: f64,
    terminal: DMatrix<f64>,
    path: Option<WeightTrajectory>,
}

/// Sampled paths and their Feynman–Kac weights, reusable across inputs `x`
/// (the trajectories do not depend on `x`, only the readout does).
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    grid: TimeGrid,
    seed: u64,
    shape: (usize, usize),
    entries: Vec<EnsembleEntry>,
}

impl PathEnsemble {
    /// Sample `n` paths. Full trajectories are kept only when `keep_paths`
    /// is set (path-dependent readouts need them).
    pub fn sample_with<P: PathMap>(
        exec: &P,
        model: &SdeModel,
        potential: &Potential,
        n: usize,
        grid: &TimeGrid,
        seed: u64,
        keep_paths: bool,
    ) -> Result<Self> {
        let entries = first_error(exec.map(n, |nu| {
            let record = SeedRecord::path(seed, nu as u64);
            let traj = sample_path(model, grid, record)?;
            let weight = weight_from_log(fk_log_weight(&traj, potential)?)?;
            Ok(EnsembleEntry {
                weight,
                terminal: traj.terminal().clone(),
                path: keep_paths.then_some(traj),
            })
        }))?;
        Ok(Self {
            grid: *grid,
            seed,
            shape: model.state_shape(),
            entries,
        })
    }

    pub fn sample(
        model: &SdeModel,
        potential: &Potential,
        n: usize,
        grid: &TimeGrid,
        seed: u64,
        keep_paths: bool,
    ) -> Result<Self> {
        Self::sample_with(&Sequential, model, potential, n, grid, seed, keep_paths)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn terminals(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.entries.iter().map(|e| &e.terminal)
    }

    pub fn estimate(&self, readout: &ReadoutSpec, x: &DVector<f64>) -> Result<RealizationEstimate> {
        self.estimate_with(&Sequential, readout, x)
    }

    /// Same value as [`realize_mc_with`] at the ensemble's seed, bit for bit.
    pub fn estimate_with<P: PathMap>(
        &self,
        exec: &P,
        readout: &ReadoutSpec,
        x: &DVector<f64>,
    ) -> Result<RealizationEstimate> {
        check_samples(self.entries.len())?;
        readout.check_input(self.shape, x)?;
        let values = first_error(exec.map(self.entries.len(), |nu| {
            let e = &self.entries[nu];
            let y = match (&e.path, readout.needs_path()) {
                (Some(path), true) => readout.evaluate(path, x)?,
                (None, true) => {
                    return Err(Error::InvalidArgument(
                        "ensemble was sampled without full paths".into(),
                    ))
                }
                _ => readout.evaluate_terminal(&e.terminal, x)?,
            };
            finite(
                e.weight * y,
                SeedRecord::path(self.seed, nu as u64),
                self.grid.steps(),
            )
        }))?;
        RealizationEstimate::from_values(&values, self.seed, self.grid)
    }
}

/// `f̂_N(x) = (1/N) Σ_ν (U^ν)ᵀ σ(W^ν x)` over terminal samples `(U^ν, W^ν)`.
pub fn fhat_n(
    samples: &[(DVector<f64>, DMatrix<f64>)],
    x: &DVector<f64>,
    sigma: &Activation,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("f̂_N needs at least one sample".into()));
    }
    let mut values = Vec::with_capacity(samples.len());
    for (u, w) in samples {
        if w.nrows() != u.len() || w.ncols() != x.len() {
            return Err(Error::DimensionMismatch {
                context: "f̂_N sample shapes",
                expected: u.len(),
                found: w.nrows(),
            });
        }
        values.push(neuron_layer(u.iter(), w, 0, x, sigma));
    }
    Ok(math::pairwise_sum(&values) / samples.len() as f64)
}

/// The penalty `h(w, t) = −|w − ξ_t|²` around a reference path `ξ`.
pub fn reference_penalty(xi: &WeightTrajectory) -> Potential {
    Potential::Reference(Arc::new(xi.clone()))
}

/// Split a two-block terminal state `[U | W̃]` into `(U, W̃)`.
pub fn split_two_block(w: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    (
        w.column(0).into_owned(),
        w.columns(1, w.ncols() - 1).into_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{skew_basis, Generators, ThetaParams};
    use crate::linalg::expm;
    use crate::rng::standard_normal;
    use alloc::vec;

    fn unit(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = SeedRecord::new(seed, 9).rng();
        let v = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
        let norm = v.norm();
        v / norm
    }

    fn brockett_sphere(seed: u64) -> SdeModel {
        let mut rng = SeedRecord::new(seed, 3).rng();
        let theta =
            ThetaParams::new(2, 3, (0..9).map(|_| 0.7 * standard_normal(&mut rng)).collect()).unwrap();
        let w0 = unit(3, seed);
        SdeModel::linear_from_theta(&theta, &skew_basis(3), DMatrix::from_column_slice(3, 1, w0.as_slice()))
            .unwrap()
    }

    fn scalar_linear(theta1: f64, theta2: f64, w0: f64) -> SdeModel {
        SdeModel::linear(
            Generators {
                drift: DMatrix::from_element(1, 1, theta1),
                diffusion: vec![DMatrix::from_element(1, 1, theta2)],
            },
            DMatrix::from_element(1, 1, w0),
        )
        .unwrap()
    }

    /// A scheduler that evaluates paths back to front, in strided chunks.
    struct Scrambled;

    impl PathMap for Scrambled {
        fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
        where
            T: Send,
            F: Fn(usize) -> T + Sync + Send,
        {
            let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
            for start in (0..3).rev() {
                for i in (start..n).step_by(3).rev() {
                    slots[i] = Some(f(i));
                }
            }
            slots.into_iter().map(|s| s.unwrap()).collect()
        }
    }

    #[test]
    fn zero_diffusion_is_deterministic() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -0.4, 0.1, 0.4, 0.0, -0.3, -0.1, 0.3, 0.0]);
        let w0 = DMatrix::from_column_slice(3, 1, &[0.6, 0.0, 0.8]);
        let model = SdeModel::linear(
            Generators {
                drift: a.clone(),
                diffusion: vec![DMatrix::zeros(3, 3)],
            },
            w0.clone(),
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.2, -1.0, 0.5]);
        let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh };
        let est = realize_mc(&model, &readout, &Potential::Zero, &x, 16, &TimeGrid::default(), 4).unwrap();
        let w1 = expm(&a) * w0;
        let expected = libm::tanh((w1.transpose() * DMatrix::from_column_slice(3, 1, x.as_slice()))[(0, 0)]);
        assert!((est.mean - expected).abs() < 1e-12);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.samples, 16);
    }

    #[test]
    fn constant_potential_factorizes() {
        let model = brockett_sphere(1);
        let x = unit(3, 2);
        let grid = TimeGrid::unit(64);
        let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh };
        let base = realize_mc(&model, &readout, &Potential::Zero, &x, 200, &grid, 11).unwrap();
        for c in [-2.0, 0.3, 1.5] {
            let weighted = realize_mc(&model, &readout, &Potential::Constant(c), &x, 200, &grid, 11).unwrap();
            let expected = libm::exp(c) * base.mean;
            assert!((weighted.mean - expected).abs() <= 1e-12 * expected.abs(), "c={c}");
        }
    }

    #[test]
    fn scalar_linear_moment() {
        let (t1, t2, w0, x) = (0.3, 0.5, 1.2, -0.8);
        let model = scalar_linear(t1, t2, w0);
        let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Identity };
        // one-dimensional linear noise commutes with the drift, so coarse steps are exact
        let est = realize_mc(&model, &readout, &Potential::Zero, &DVector::from_element(1, x), 100_000, &TimeGrid::unit(4), 21)
            .unwrap();
        let exact = x * w0 * libm::exp(t1 + t2 * t2 / 2.0);
        assert!((est.mean - exact).abs() <= 3.0 * est.stderr, "{} vs {exact} ± {}", est.mean, est.stderr);
    }

    #[test]
    fn linear_in_readout_vector() {
        let model = SdeModel::linear_from_theta(
            &ThetaParams::new(1, 3, vec![0.1, -0.2, 0.3, 0.5, 0.4, -0.6]).unwrap(),
            &skew_basis(3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let grid = TimeGrid::unit(32);
        let x = DVector::from_vec(vec![0.5, -0.3, 0.8]);
        let v1 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v2 = DVector::from_vec(vec![0.25, 0.75, -1.5]);
        for make in [
            (|v: DVector<f64>| ReadoutSpec::VectorNeuron { v, sigma: Activation::Tanh }) as fn(_) -> _,
            |v| ReadoutSpec::CascadeLinear { v, sigma: Activation::Tanh },
        ] {
            let f = |v: &DVector<f64>| {
                realize_mc(&model, &make(v.clone()), &Potential::Zero, &x, 50, &grid, 8).unwrap().mean
            };
            let sum = f(&(&v1 + &v2));
            assert!((sum - f(&v1) - f(&v2)).abs() <= 1e-13);
        }
    }

    #[test]
    fn mean_independent_of_scheduling() {
        let model = brockett_sphere(5);
        let x = unit(3, 6);
        let grid = TimeGrid::unit(16);
        let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh };
        let a = realize_mc(&model, &readout, &Potential::Zero, &x, 101, &grid, 3).unwrap();
        let b = realize_mc_with(&Scrambled, &model, &readout, &Potential::Zero, &x, 101, &grid, 3).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn stderr_scales_as_inverse_root_n() {
        let model = brockett_sphere(2);
        let x = unit(3, 4);
        let grid = TimeGrid::unit(16);
        let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh };
        let small = realize_mc(&model, &readout, &Potential::Zero, &x, 10_000, &grid, 100).unwrap();
        let large = realize_mc(&model, &readout, &Potential::Zero, &x, 40_000, &grid, 200).unwrap();
        let ratio = large.stderr / small.stderr;
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn ensemble_matches_direct_evaluation() {
        let model = brockett_sphere(7);
        let grid = TimeGrid::unit(16);
        let pot = Potential::Constant(-0.25);
        let ens = PathEnsemble::sample(&model, &pot, 40, &grid, 13, false).unwrap();
        let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::CubicPlusOne };
        for s in 0..4 {
            let x = unit(3, 30 + s);
            let cached = ens.estimate(&readout, &x).unwrap();
            let direct = realize_mc(&model, &readout, &pot, &x, 40, &grid, 13).unwrap();
            assert_eq!(cached, direct);
        }
        let cascade = ReadoutSpec::CascadeLinear { v: DVector::zeros(3), sigma: Activation::Tanh };
        assert!(ens.estimate(&cascade, &unit(3, 1)).is_err());
    }

    #[test]
    fn shape_and_sample_checks() {
        let model = brockett_sphere(1);
        let grid = TimeGrid::unit(4);
        let r = ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh };
        assert!(realize_mc(&model, &r, &Potential::Zero, &unit(3, 1), 1, &grid, 0).is_err());
        assert!(realize_mc(&model, &r, &Potential::Zero, &unit(2, 1), 4, &grid, 0).is_err());
        let two = ReadoutSpec::TwoBlock { sigma: Activation::Tanh };
        assert!(two.validate((3, 1)).is_err());
        let bad_v = ReadoutSpec::VectorNeuron { v: DVector::from_element(3, f64::NAN), sigma: Activation::Tanh };
        assert!(bad_v.validate((3, 2)).is_err());
        let cascade = ReadoutSpec::CascadeLinear { v: DVector::zeros(3), sigma: Activation::Tanh };
        assert!(cascade.validate((3, 2)).is_err());
        assert!(cascade.validate((3, 3)).is_ok());
    }

    #[test]
    fn fhat_singleton_and_bound() {
        let u = unit(4, 1);
        let w = DMatrix::from_fn(4, 2, |i, j| (i as f64) - 0.5 * j as f64);
        let x = DVector::from_vec(vec![0.3, -0.9]);
        let single = fhat_n(&[(u.clone(), w.clone())], &x, &Activation::Tanh).unwrap();
        let pre = &w * &x;
        let expected: f64 = (0..4).map(|i| u[i] * libm::tanh(pre[i])).sum();
        assert_eq!(single, expected);
        assert!(fhat_n(&[], &x, &Activation::Tanh).is_err());

        let mut rng = SeedRecord::new(99, 0).rng();
        for trial in 0..200u64 {
            let samples: Vec<_> = (0..5)
                .map(|k| {
                    let w = DMatrix::from_fn(4, 2, |_, _| 3.0 * standard_normal(&mut rng));
                    (unit(4, 1000 * trial + k), w)
                })
                .collect();
            let x = DVector::from_fn(2, |_, _| 5.0 * standard_normal(&mut rng));
            assert!(fhat_n(&samples, &x, &Activation::Tanh).unwrap().abs() <= 2.0 + 1e-15);
        }
    }

    #[test]
    fn fhat_agrees_with_two_block_realization() {
        // state [U | W̃] with U on S² and W̃ ∈ R^{3×2}, rotated together
        let mut rng = SeedRecord::new(17, 0).rng();
        let theta = ThetaParams::new(2, 3, (0..9).map(|_| 0.6 * standard_normal(&mut rng)).collect()).unwrap();
        let u0 = unit(3, 3);
        let mut w0 = DMatrix::from_fn(3, 3, |_, _| standard_normal(&mut rng));
        w0.set_column(0, &u0);
        let model = SdeModel::linear_from_theta(&theta, &skew_basis(3), w0).unwrap();
        let grid = TimeGrid::unit(16);
        let x = DVector::from_vec(vec![0.4, -0.7]);
        let n = 10_000;
        let readout = ReadoutSpec::TwoBlock { sigma: Activation::Tanh };
        let est = realize_mc(&model, &readout, &Potential::Zero, &x, n, &grid, 5).unwrap();
        let ens = PathEnsemble::sample(&model, &Potential::Zero, n, &grid, 5, false).unwrap();
        let samples: Vec<_> = ens.terminals().map(split_two_block).collect();
        let fhat = fhat_n(&samples, &x, &Activation::Tanh).unwrap();
        // same seeds, so the two estimators see the same paths
        assert!((fhat - est.mean).abs() <= 3.0 * core::f64::consts::SQRT_2 * est.stderr);
        assert!((fhat - est.mean).abs() <= 1e-12);
    }

    #[test]
    fn reference_penalty_properties() {
        let model = brockett_sphere(4);
        let grid = TimeGrid::unit(32);
        let xi = sample_path(&model, &grid, SeedRecord::path(77, 0)).unwrap();
        let pen = reference_penalty(&xi);
        for (k, w) in xi.states.iter().enumerate() {
            assert_eq!(pen.eval(w, grid.time(k)), 0.0);
        }

        let still = SdeModel::linear(
            Generators { drift: DMatrix::zeros(3, 3), diffusion: vec![DMatrix::zeros(3, 3)] },
            model.w0().clone(),
        )
        .unwrap();
        let xi0 = sample_path(&still, &grid, SeedRecord::path(0, 0)).unwrap();
        let r = ReadoutSpec::ScalarNeuron { sigma: Activation::Identity };
        let x = unit(3, 8);
        let plain = realize_mc(&still, &r, &Potential::Zero, &x, 4, &grid, 1).unwrap();
        let penalized = realize_mc(&still, &r, &reference_penalty(&xi0), &x, 4, &grid, 1).unwrap();
        assert_eq!(plain.mean, penalized.mean);

        // 1 + r³ ≥ 0 for |r| ≤ 1, which holds for unit w and x
        let cubic = ReadoutSpec::ScalarNeuron { sigma: Activation::CubicPlusOne };
        for nu in 0..50 {
            let rec = SeedRecord::path(3, nu);
            let free = path_value(&model, &cubic, &Potential::Zero, &x, &grid, rec).unwrap();
            let held = path_value(&model, &cubic, &pen, &x, &grid, rec).unwrap();
            assert!(free >= 0.0 && held <= free, "path {nu}");
        }
    }
}
