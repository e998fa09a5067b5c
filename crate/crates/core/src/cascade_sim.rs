//! Simulation of a monolithic neural SDE by a weight/activation cascade.
//!
//! The direct system is `dX = f(X) dt + Σ_i g_i(X) ∘ dVⁱ` with linear fields
//! `g_i(x) = Σ_j β_ij G_j x`. The cascade runs weights `W ∈ Rᵈ` with
//! `dW = Σ_i (Σ_j β_ij b_j(W)) ∘ dVⁱ` and activations `dZ/dt = h(Z, W)`, and
//! reads the state back through the decoding map
//! `φ(w, z) = exp(w₁G₁)⋯exp(w_dG_d) z`.
//!
//! The fields `b_j` satisfy `Σ_k b_j^k ∂φ/∂w_k = G_j φ`. For commuting
//! generators they are the coordinate vectors. Otherwise they are solved
//! numerically at each `w` from the operator identity
//! `Σ_k b_j^k ∂P/∂w_k = G_j P`, `P(w) = exp(w₁G₁)⋯exp(w_dG_d)`, which holds
//! for every `z` at once; agreement with single-probe solves is checked
//! separately.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::commutator;
use crate::linalg::{self, expm};
use crate::math;
use crate::realization::{PathMap, Sequential};
use crate::rng::{standard_normal, SeedRecord, StreamLabel};
use crate::sde::{integrate_heun, BrownianIncrements, GeneralFields, SdeModel, TimeGrid, VectorFn, WeightTrajectory};

/// Condition number of `∂φ/∂z` above which a warning is logged.
pub const CONDITION_WARNING: f64 = 1e12;

/// Relative singular-value cutoff for the `b` least-squares solves.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BMode {
    /// Commuting generators: `b_j = e_j`.
    Abelian,
    /// `b_j(w)` from pointwise linear solves.
    Empirical,
}

/// Generators, expansion coefficients, drift, readout and validity box
/// `|w|_∞ ≤ r_w`, `|z − x|_∞ ≤ r_z`.
#[derive(Clone)]
pub struct SimulationSetup {
    generators: Vec<DMatrix<f64>>,
    beta: DMatrix<f64>,
    drift: Option<VectorFn>,
    readout: DVector<f64>,
    r_w: f64,
    r_z: f64,
    mode: BMode,
}

impl fmt::Debug for SimulationSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulationSetup")
            .field("n", &self.n())
            .field("d", &self.d())
            .field("m", &self.m())
            .field("has_drift", &self.drift.is_some())
            .field("r_w", &self.r_w)
            .field("r_z", &self.r_z)
            .field("mode", &self.mode)
            .finish()
    }
}

impl SimulationSetup {
    /// `drift = None` means `f ≡ 0`. The mode is abelian exactly when every
    /// pair of generators commutes.
    pub fn new(
        generators: Vec<DMatrix<f64>>,
        beta: DMatrix<f64>,
        drift: Option<VectorFn>,
        readout: DVector<f64>,
        r_w: f64,
        r_z: f64,
    ) -> Result<Self> {
        let d = generators.len();
        if d == 0 {
            return Err(Error::InvalidArgument("at least one generator is required".into()));
        }
        let n = generators[0].nrows();
        for g in &generators {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "cascade generators",
                    expected: n,
                    found: g.ncols(),
                });
            }
        }
        if beta.ncols() != d || beta.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                context: "beta columns (one per generator)",
                expected: d,
                found: beta.ncols(),
            });
        }
        if readout.len() != n {
            return Err(Error::DimensionMismatch {
                context: "readout vector",
                expected: n,
                found: readout.len(),
            });
        }
        if !(r_w > 0.0 && r_z > 0.0) {
            return Err(Error::Configuration(alloc::format!(
                "neighborhood radii must be positive, got r_w = {r_w}, r_z = {r_z}"
            )));
        }
        let all_finite = generators.iter().flat_map(|g| g.iter()).chain(beta.iter()).chain(readout.iter()).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFiniteInput("simulation setup"));
        }
        let stacked = DMatrix::from_fn(n * n, d, |r, j| generators[j][(r % n, r / n)]);
        let sv = stacked.singular_values();
        let top = sv.max();
        if sv.iter().any(|s| *s <= 1e-10 * top) || top == 0.0 {
            return Err(Error::InvalidArgument("generators are linearly dependent".into()));
        }
        let mut abelian = true;
        for a in 0..d {
            for b in a + 1..d {
                let c = commutator(&generators[a], &generators[b])?;
                let scale = linalg::max_abs(&generators[a]) * linalg::max_abs(&generators[b]);
                if linalg::max_abs(&c) > 1e-14 * scale {
                    abelian = false;
                }
            }
        }
        Ok(Self {
            generators,
            beta,
            drift,
            readout,
            r_w,
            r_z,
            mode: if abelian { BMode::Abelian } else { BMode::Empirical },
        })
    }

    /// Force the `b` construction. Abelian mode is refused for
    /// non-commuting generators.
    pub fn with_mode(mut self, mode: BMode) -> Result<Self> {
        if mode == BMode::Abelian && self.mode == BMode::Empirical {
            return Err(Error::Configuration(
                "abelian mode needs commuting generators".into(),
            ));
        }
        self.mode = mode;
        Ok(self)
    }

    /// Same setup with a different validity box.
    pub fn with_radii(mut self, r_w: f64, r_z: f64) -> Result<Self> {
        if !(r_w > 0.0 && r_z > 0.0) {
            return Err(Error::Configuration("neighborhood radii must be positive".into()));
        }
        self.r_w = r_w;
        self.r_z = r_z;
        Ok(self)
    }

    pub fn mode(&self) -> BMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.generators[0].nrows()
    }

    pub fn d(&self) -> usize {
        self.generators.len()
    }

    pub fn m(&self) -> usize {
        self.beta.nrows()
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn readout(&self) -> &DVector<f64> {
        &self.readout
    }

    pub fn radii(&self) -> (f64, f64) {
        (self.r_w, self.r_z)
    }

    fn f(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.drift {
            Some(f) => f(x),
            None => DVector::zeros(x.len()),
        }
    }

    /// Whether `(w, z)` lies in the validity box around `(0, x)`.
    pub fn contains(&self, w: &DVector<f64>, z: &DVector<f64>, x: &DVector<f64>) -> bool {
        w.amax() <= self.r_w && (z - x).amax() <= self.r_z
    }

    fn check_w(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.d() {
            return Err(Error::DimensionMismatch {
                context: "cascade weight w",
                expected: self.d(),
                found: w.len(),
            });
        }
        Ok(())
    }

    fn check_z(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "cascade state z",
                expected: self.n(),
                found: z.len(),
            });
        }
        Ok(())
    }

    fn factors(&self, w: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.generators
            .iter()
            .zip(w.iter())
            .map(|(g, wj)| expm(&(g * *wj)))
            .collect()
    }
}

fn product(factors: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    factors
        .iter()
        .fold(DMatrix::identity(n, n), |acc, e| acc * e)
}

/// `P(w) = exp(w₁G₁)⋯exp(w_dG_d)`.
pub fn flow_product(w: &DVector<f64>, setup: &SimulationSetup) -> Result<DMatrix<f64>> {
    setup.check_w(w)?;
    Ok(product(&setup.factors(w), setup.n()))
}

/// `φ(w, z) = exp(w₁G₁)⋯exp(w_dG_d) z`.
pub fn decode_phi(w: &DVector<f64>, z: &DVector<f64>, setup: &SimulationSetup) -> Result<DVector<f64>> {
    setup.check_z(z)?;
    Ok(flow_product(w, setup)? * z)
}

/// `∂φ/∂z`, which for linear flows is `P(w)` itself. Logs a warning when
/// its condition number exceeds [`CONDITION_WARNING`].
pub fn jacobian_phi_z(w: &DVector<f64>, z: &DVector<f64>, setup: &SimulationSetup) -> Result<DMatrix<f64>> {
    setup.check_z(z)?;
    let p = flow_product(w, setup)?;
    let sv = p.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= CONDITION_WARNING) {
        log::warn!("∂φ/∂z has condition number {cond:e} at w = {:?}", w.as_slice());
    }
    Ok(p)
}

/// `h(z, w) = (∂φ/∂z)⁻¹ f(φ(w, z))`, by an LU solve.
pub fn cascade_drift_h(z: &DVector<f64>, w: &DVector<f64>, setup: &SimulationSetup) -> Result<DVector<f64>> {
    setup.check_z(z)?;
    let p = flow_product(w, setup)?;
    let rhs = setup.f(&(&p * z));
    p.lu()
        .solve(&rhs)
        .filter(|h| h.iter().all(|v| v.is_finite()))
        .ok_or(Error::Singular("∂φ/∂z in the cascade drift"))
}

/// `∂P/∂w_k = E₁⋯E_{k−1} G_k E_k⋯E_d` with `E_j = exp(w_jG_j)`.
fn flow_derivatives(setup: &SimulationSetup, factors: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = setup.n();
    (0..setup.d())
        .map(|k| {
            let left = product(&factors[..k], n);
            let right = product(&factors[k..], n);
            left * &setup.generators[k] * right
        })
        .collect()
}

/// Least-squares solve of `M b = r` with `M` required to have full column rank.
fn full_rank_solve(m: DMatrix<f64>, rhs: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.svd(true, true);
    let top = svd.singular_values.max();
    if svd.singular_values.iter().any(|s| *s <= RANK_TOLERANCE * top) {
        return Err(Error::Singular("∂φ/∂w system for the cascade fields"));
    }
    svd.solve(&rhs, 0.0).map_err(|_| Error::Singular("∂φ/∂w least squares"))
}

/// The fields `b_1(w), …, b_d(w)` as the columns of a `d×d` matrix, from
/// the operator identity (probes `z` ranging over a basis).
pub fn empirical_b(w: &DVector<f64>, setup: &SimulationSetup) -> Result<DMatrix<f64>> {
    let n = setup.n();
    let probes: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 }))
        .collect();
    probe_b(w, &probes, setup)
}

/// `b_j(w)` from the equations `Σ_k b_j^k ∂φ/∂w_k(w, z) = G_j φ(w, z)`
/// stacked over the given probe states `z`.
pub fn probe_b(w: &DVector<f64>, probes: &[DVector<f64>], setup: &SimulationSetup) -> Result<DMatrix<f64>> {
    setup.check_w(w)?;
    let (n, d) = (setup.n(), setup.d());
    for z in probes {
        setup.check_z(z)?;
    }
    let factors = setup.factors(w);
    let p = product(&factors, n);
    let dp = flow_derivatives(setup, &factors);
    let rows = n * probes.len();
    let mut lhs = DMatrix::zeros(rows, d);
    let mut rhs = DMatrix::zeros(rows, d);
    for (s, z) in probes.iter().enumerate() {
        let phi = &p * z;
        for k in 0..d {
            lhs.view_mut((s * n, k), (n, 1)).copy_from(&(&dp[k] * z));
            rhs.view_mut((s * n, k), (n, 1)).copy_from(&(&setup.generators[k] * &phi));
        }
    }
    full_rank_solve(lhs, rhs)
}

/// `b_j(w)` for every `j`, per the setup's mode.
pub fn cascade_fields(w: &DVector<f64>, setup: &SimulationSetup) -> Result<DMatrix<f64>> {
    match setup.mode {
        BMode::Abelian => {
            setup.check_w(w)?;
            Ok(DMatrix::identity(setup.d(), setup.d()))
        }
        BMode::Empirical => empirical_b(w, setup),
    }
}

/// Largest deviation between operator-level `b(w)` and solves from random
/// pairs of probe states, over `points` random `w` in the weight box.
pub fn b_probe_deviation(setup: &SimulationSetup, points: usize, seed: u64) -> Result<f64> {
    let mut rng = SeedRecord::labeled(seed, StreamLabel::Probe, 0).rng();
    let (n, d) = (setup.n(), setup.d());
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let w = DVector::from_fn(d, |_, _| setup.r_w * (2.0 * uniform(&mut rng) - 1.0));
        let reference = empirical_b(&w, setup)?;
        let probes: Vec<DVector<f64>> = (0..2).map(|_| DVector::from_fn(n, |_, _| standard_normal(&mut rng))).collect();
        let probed = probe_b(&w, &probes, setup)?;
        worst = worst.max(linalg::max_abs(&(probed - reference)));
    }
    Ok(worst)
}

fn uniform<R: rand::Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Cascade and direct paths driven by the same increments.
#[derive(Clone, Debug)]
pub struct PairedPaths {
    pub increments: BrownianIncrements,
    pub cascade_w: Vec<DVector<f64>>,
    pub cascade_z: Vec<DVector<f64>>,
    pub direct: Vec<DVector<f64>>,
    /// First node outside the validity box; `None` if the path stays inside.
    pub tau_index: Option<usize>,
}

impl PairedPaths {
    /// Number of leading nodes at which the comparison is valid.
    pub fn compared_nodes(&self) -> usize {
        self.tau_index.unwrap_or(self.direct.len())
    }

    /// `|vᵀφ(W_k, Z_k) − vᵀX_k|` at every node before the exit.
    pub fn readout_gaps(&self, setup: &SimulationSetup) -> Result<Vec<f64>> {
        (0..self.compared_nodes())
            .map(|k| {
                let y = setup.readout.dot(&decode_phi(&self.cascade_w[k], &self.cascade_z[k], setup)?);
                Ok((y - setup.readout.dot(&self.direct[k])).abs())
            })
            .collect()
    }

    pub fn sup_gap(&self, setup: &SimulationSetup) -> Result<f64> {
        Ok(self.readout_gaps(setup)?.into_iter().fold(0.0, f64::max))
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau_index.map(|k| self.increments.grid().time(k))
    }
}

fn column(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn weight_model(setup: &SimulationSetup) -> Result<SdeModel> {
    let d = setup.d();
    let diffusion = (0..setup.m())
        .map(|i| {
            let s = setup.clone();
            let beta_row: DVector<f64> = setup.beta.row(i).transpose();
            Arc::new(move |w: &DVector<f64>| match cascade_fields(w, &s) {
                Ok(b) => &b * &beta_row,
                Err(_) => DVector::from_element(w.len(), f64::NAN),
            }) as VectorFn
        })
        .collect();
    SdeModel::general(
        GeneralFields {
            dim: d,
            drift: Arc::new(move |_: &DVector<f64>| DVector::zeros(d)),
            diffusion,
            diffusion_jacobians: None,
        },
        DVector::zeros(d),
    )
}

fn direct_model(setup: &SimulationSetup, x: &DVector<f64>) -> Result<SdeModel> {
    let diffusion = (0..setup.m())
        .map(|i| {
            let g = (0..setup.d()).fold(DMatrix::zeros(setup.n(), setup.n()), |acc, j| {
                acc + &setup.generators[j] * setup.beta[(i, j)]
            });
            Arc::new(move |x: &DVector<f64>| &g * x) as VectorFn
        })
        .collect();
    let s = setup.clone();
    SdeModel::general(
        GeneralFields {
            dim: setup.n(),
            drift: Arc::new(move |x: &DVector<f64>| s.f(x)),
            diffusion,
            diffusion_jacobians: None,
        },
        x.clone(),
    )
}

fn to_vectors(traj: &WeightTrajectory) -> Vec<DVector<f64>> {
    traj.states.iter().map(column).collect()
}

/// Run both systems on `increments`: the cascade weights and the direct
/// state by Stratonovich Heun, the activations by RK4 with `W` averaged at
/// half steps.
pub fn simulate_paired(
    setup: &SimulationSetup,
    x: &DVector<f64>,
    increments: &BrownianIncrements,
) -> Result<PairedPaths> {
    setup.check_z(x)?;
    if increments.noise_dim() != setup.m() {
        return Err(Error::DimensionMismatch {
            context: "noise channels",
            expected: setup.m(),
            found: increments.noise_dim(),
        });
    }
    let grid = *increments.grid();
    let w_path = to_vectors(&integrate_heun(&weight_model(setup)?, &grid, increments)?);
    let direct = to_vectors(&integrate_heun(&direct_model(setup, x)?, &grid, increments)?);

    let h = grid.h();
    let mut z_path = Vec::with_capacity(grid.steps() + 1);
    z_path.push(x.clone());
    let mut tau_index = None;
    for k in 0..grid.steps() {
        if !setup.contains(&w_path[k], &z_path[k], x) {
            tau_index = Some(k);
            break;
        }
        let (w0, w1) = (&w_path[k], &w_path[k + 1]);
        let mid = (w0 + w1) * 0.5;
        let z = &z_path[k];
        let k1 = cascade_drift_h(z, w0, setup)?;
        let k2 = cascade_drift_h(&(z + &k1 * (0.5 * h)), &mid, setup)?;
        let k3 = cascade_drift_h(&(z + &k2 * (0.5 * h)), &mid, setup)?;
        let k4 = cascade_drift_h(&(z + &k3 * h), w1, setup)?;
        z_path.push(z + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0));
    }
    if tau_index.is_none() && !setup.contains(&w_path[grid.steps()], &z_path[grid.steps()], x) {
        tau_index = Some(grid.steps());
    }
    // nodes past the exit are not integrated; keep the vectors aligned
    while z_path.len() < w_path.len() {
        z_path.push(z_path.last().expect("nonempty").clone());
    }
    Ok(PairedPaths {
        increments: increments.clone(),
        cascade_w: w_path,
        cascade_z: z_path,
        direct,
        tau_index,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathReport {
    pub path_id: usize,
    pub tau_index: Option<usize>,
    pub tau: Option<f64>,
    pub sup_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub paths: Vec<PathReport>,
    pub grid: TimeGrid,
    pub seed: u64,
    /// Fraction of paths with `τ < T`.
    pub exit_fraction: f64,
    pub gap_median: f64,
    pub gap_q95: f64,
    pub gap_max: f64,
    pub gap_mean: f64,
    /// Quantiles (0.05, 0.5, 0.95) of the exit times among exiting paths.
    pub tau_quantiles: Option<[f64; 3]>,
    /// Empirical mode only: largest probe-pair deviation of `b`.
    pub b_deviation: Option<f64>,
}

/// Number of random weights at which the probe check is run.
pub const PROBE_POINTS: usize = 10;

pub fn verify_simulation(
    setup: &SimulationSetup,
    x: &DVector<f64>,
    grid: &TimeGrid,
    seed: u64,
    n_paths: usize,
) -> Result<VerificationReport> {
    verify_simulation_with(&Sequential, setup, x, grid, seed, n_paths)
}

/// Simulate `n_paths` paired paths (path `ν` on stream `ν` of `seed`) and
/// summarize the readout gaps before exit.
pub fn verify_simulation_with<P: PathMap>(
    exec: &P,
    setup: &SimulationSetup,
    x: &DVector<f64>,
    grid: &TimeGrid,
    seed: u64,
    n_paths: usize,
) -> Result<VerificationReport> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("at least one path is required".into()));
    }
    let reports = exec
        .map(n_paths, |nu| -> Result<PathReport> {
            let inc = BrownianIncrements::sample(*grid, setup.m(), SeedRecord::path(seed, nu as u64));
            let paths = simulate_paired(setup, x, &inc)?;
            Ok(PathReport {
                path_id: nu,
                tau_index: paths.tau_index,
                tau: paths.tau(),
                sup_gap: paths.sup_gap(setup)?,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    summarize(setup, reports, *grid, seed)
}

/// Build a report from per-path results.
pub fn summarize(
    setup: &SimulationSetup,
    paths: Vec<PathReport>,
    grid: TimeGrid,
    seed: u64,
) -> Result<VerificationReport> {
    if let Some(p) = paths.iter().find(|p| p.tau_index.is_some_and(|k| k <= 1)) {
        return Err(Error::Configuration(alloc::format!(
            "path {} leaves the validity neighborhood at the first step; enlarge r_w/r_z",
            p.path_id
        )));
    }
    let gaps: Vec<f64> = paths.iter().map(|p| p.sup_gap).collect();
    let taus: Vec<f64> = paths.iter().filter_map(|p| p.tau).collect();
    let exits = paths.iter().filter(|p| p.tau_index.is_some_and(|k| k < grid.steps())).count();
    let b_deviation = match setup.mode {
        BMode::Empirical => Some(b_probe_deviation(setup, PROBE_POINTS, seed)?),
        BMode::Abelian => None,
    };
    Ok(VerificationReport {
        exit_fraction: exits as f64 / paths.len() as f64,
        gap_median: math::quantile(&gaps, 0.5),
        gap_q95: math::quantile(&gaps, 0.95),
        gap_max: gaps.iter().copied().fold(0.0, f64::max),
        gap_mean: math::pairwise_sum(&gaps) / gaps.len() as f64,
        tau_quantiles: (!taus.is_empty()).then(|| {
            [
                math::quantile(&taus, 0.05),
                math::quantile(&taus, 0.5),
                math::quantile(&taus, 0.95),
            ]
        }),
        b_deviation,
        paths,
        grid,
        seed,
    })
}
