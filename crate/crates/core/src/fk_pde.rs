//! One-dimensional Feynman–Kac PDE `u_t = ã u_w + c u_ww + h u`,
//! `u(w, 0) = σ(w x)`, whose solution at `(w0, 1)` equals the realized
//! function of a scalar weight diffusion.
//!
//! The time derivative is `∂u/∂t`. The potential is read at reversed time
//! `h(w, 1 − t)`, which makes `u(w0, 1)` the expectation of the path-ordered
//! weight `exp(∫₀¹ h(W_s, s) ds)`; time-independent potentials are unaffected.
//!
//! Each step is a Strang splitting: half a potential step, a Crank–Nicolson
//! step for the generator, then the other half. The potential factors are
//! pointwise exponentials, so a constant potential factors out exactly.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use nalgebra::DMatrix;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linalg::solve_tridiagonal;
use crate::math;
use crate::sde::{ito_correction, Potential, SdeKind, SdeModel};

/// Uniform spatial grid on `[w_min, w_max]` with `K_t` time steps over `[0, 1]`.
///
/// Boundary nodes carry Dirichlet data `σ(w_b x)`, multiplied by the same
/// potential factors as the interior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    w_min: f64,
    w_max: f64,
    nodes: usize,
    time_steps: usize,
    w0: f64,
}

pub const MIN_NODES: usize = 51;

impl Grid1D {
    pub fn new(w_min: f64, w_max: f64, nodes: usize, time_steps: usize, w0: f64) -> Result<Self> {
        if !(w_min.is_finite() && w_max.is_finite() && w0.is_finite()) {
            return Err(Error::NonFiniteInput("PDE grid"));
        }
        if nodes < MIN_NODES {
            return Err(Error::InvalidArgument(alloc::format!(
                "PDE grid needs at least {MIN_NODES} nodes, got {nodes}"
            )));
        }
        if time_steps == 0 {
            return Err(Error::InvalidArgument("PDE grid needs at least one time step".into()));
        }
        if !(w_min < w0 && w0 < w_max) {
            return Err(Error::InvalidArgument(alloc::format!(
                "w0 = {w0} is not strictly inside [{w_min}, {w_max}]"
            )));
        }
        Ok(Self {
            w_min,
            w_max,
            nodes,
            time_steps,
            w0,
        })
    }

    /// Domain `[w0 − half_width, w0 + half_width]`; with odd `nodes`, `w0`
    /// is the centre node.
    pub fn centered(w0: f64, half_width: f64, nodes: usize, time_steps: usize) -> Result<Self> {
        Self::new(w0 - half_width, w0 + half_width, nodes, time_steps, w0)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.w_min, self.w_max)
    }

    pub fn spacing(&self) -> f64 {
        (self.w_max - self.w_min) / (self.nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.nodes - 1 {
            self.w_max
        } else {
            self.w_min + i as f64 * self.spacing()
        }
    }

    /// Same domain and `w0` with `factor`× finer space and time steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            nodes: (self.nodes - 1) * factor + 1,
            time_steps: self.time_steps * factor,
            ..*self
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Generator `L u = ã(w) u' + c(w) u''` with `c = ½ Σ b_i²`.
#[derive(Clone)]
pub struct GeneratorCoefficients1D {
    pub drift: ScalarFn,
    pub diffusion: ScalarFn,
}

impl fmt::Debug for GeneratorCoefficients1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("GeneratorCoefficients1D(..)")
    }
}

impl GeneratorCoefficients1D {
    pub fn new(drift: ScalarFn, diffusion: ScalarFn) -> Self {
        Self { drift, diffusion }
    }

    pub fn constant(drift: f64, diffusion: f64) -> Self {
        Self::new(Arc::new(move |_| drift), Arc::new(move |_| diffusion))
    }

    /// Coefficients of a scalar weight diffusion: the Itô-corrected drift and
    /// half the squared diffusion.
    pub fn from_model(model: &SdeModel) -> Result<Self> {
        if model.state_shape() != (1, 1) {
            return Err(Error::Configuration(alloc::format!(
                "the PDE cross-check needs a scalar weight, got shape {:?}",
                model.state_shape()
            )));
        }
        let m_drift = model.clone();
        // surface a missing Jacobian now rather than inside the solve
        ito_correction(model, &DMatrix::from_element(1, 1, model.w0()[(0, 0)]))?;
        let drift: ScalarFn = Arc::new(move |w| {
            ito_correction(&m_drift, &DMatrix::from_element(1, 1, w))
                .map(|a| a[(0, 0)])
                .unwrap_or(f64::NAN)
        });
        let diffusion: ScalarFn = match model.kind() {
            SdeKind::Linear(g) => {
                let b2: f64 = g.diffusion.iter().map(|b| b[(0, 0)] * b[(0, 0)]).sum();
                Arc::new(move |w| 0.5 * b2 * w * w)
            }
            SdeKind::General(f) => {
                let fields = f.diffusion.clone();
                Arc::new(move |w| {
                    let v = nalgebra::DVector::from_element(1, w);
                    0.5 * fields.iter().map(|b| b(&v)[0] * b(&v)[0]).sum::<f64>()
                })
            }
        };
        Ok(Self::new(drift, diffusion))
    }
}

/// Solution on the final slice plus per-slice extremes.
#[derive(Clone, Debug, PartialEq)]
pub struct FkSolution {
    pub grid: Grid1D,
    /// `u(w_i, 1)` at every node.
    pub terminal: Vec<f64>,
    /// `u(w0, 1)`, linearly interpolated between nodes.
    pub value: f64,
    /// `max_i u(w_i, t_k)` for `k = 0..=K_t`.
    pub slice_max: Vec<f64>,
    /// `min_i u(w_i, t_k)` for `k = 0..=K_t`.
    pub slice_min: Vec<f64>,
}

impl FkSolution {
    /// `(w_i, u(w_i, 1))` pairs.
    pub fn slice(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .map(|(i, u)| (self.grid.node(i), *u))
    }
}

pub fn solve_fk(
    coeffs: &GeneratorCoefficients1D,
    potential: &Potential,
    sigma: &Activation,
    x: f64,
    grid: &Grid1D,
) -> Result<f64> {
    Ok(solve_fk_profile(coeffs, potential, sigma, x, grid)?.value)
}

fn potential_factors(potential: &Potential, nodes: &[f64], t: f64, half_dt: f64) -> Vec<f64> {
    nodes
        .iter()
        .map(|&w| math::exp(potential.eval_scalar(w, 1.0 - t) * half_dt))
        .collect()
}

pub fn solve_fk_profile(
    coeffs: &GeneratorCoefficients1D,
    potential: &Potential,
    sigma: &Activation,
    x: f64,
    grid: &Grid1D,
) -> Result<FkSolution> {
    if !x.is_finite() {
        return Err(Error::NonFiniteInput("PDE input x"));
    }
    let m = grid.nodes();
    let dw = grid.spacing();
    let dt = 1.0 / grid.time_steps() as f64;
    let nodes: Vec<f64> = (0..m).map(|i| grid.node(i)).collect();

    // L as a tridiagonal stencil (lower, diag, upper) on interior nodes
    let mut lower = alloc::vec![0.0; m];
    let mut diag = alloc::vec![0.0; m];
    let mut upper = alloc::vec![0.0; m];
    for i in 1..m - 1 {
        let a = (coeffs.drift)(nodes[i]);
        let c = (coeffs.diffusion)(nodes[i]);
        if !a.is_finite() || !c.is_finite() {
            return Err(Error::NonFiniteInput("generator coefficients"));
        }
        if c < 0.0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "negative diffusion coefficient {c} at w = {}",
                nodes[i]
            )));
        }
        lower[i] = c / (dw * dw) - a / (2.0 * dw);
        diag[i] = -2.0 * c / (dw * dw);
        upper[i] = c / (dw * dw) + a / (2.0 * dw);
    }
    let (mut sys_lower, mut sys_diag, mut sys_upper) = (alloc::vec![0.0; m], alloc::vec![1.0; m], alloc::vec![0.0; m]);
    for i in 1..m - 1 {
        sys_lower[i] = -0.5 * dt * lower[i];
        sys_diag[i] = 1.0 - 0.5 * dt * diag[i];
        sys_upper[i] = -0.5 * dt * upper[i];
    }

    let mut u: Vec<f64> = nodes.iter().map(|&w| sigma.value(w * x)).collect();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("initial condition"));
    }
    let extremes = |u: &[f64]| {
        u.iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &v| (hi.max(v), lo.min(v)))
    };
    let (hi, lo) = extremes(&u);
    let mut slice_max = alloc::vec![hi];
    let mut slice_min = alloc::vec![lo];
    let mut rhs = alloc::vec![0.0; m];
    let apply = |u: &mut [f64], f: &[f64]| u.iter_mut().zip(f).for_each(|(v, e)| *v *= e);

    for k in 0..grid.time_steps() {
        let t = k as f64 * dt;
        if !potential.is_zero() {
            apply(&mut u, &potential_factors(potential, &nodes, t, 0.5 * dt));
        }
        rhs[0] = u[0];
        rhs[m - 1] = u[m - 1];
        for i in 1..m - 1 {
            rhs[i] = u[i] + 0.5 * dt * (lower[i] * u[i - 1] + diag[i] * u[i] + upper[i] * u[i + 1]);
        }
        u = solve_tridiagonal(&sys_lower, &sys_diag, &sys_upper, &rhs)?;
        if !potential.is_zero() {
            apply(&mut u, &potential_factors(potential, &nodes, t + dt, 0.5 * dt));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "PDE solution became non-finite at time step {}",
                k + 1
            )));
        }
        let (hi, lo) = extremes(&u);
        slice_max.push(hi);
        slice_min.push(lo);
    }

    let pos = (grid.w0() - nodes[0]) / dw;
    let i = (libm::floor(pos) as usize).min(m - 2);
    let lambda = pos - i as f64;
    let value = if lambda == 0.0 {
        u[i]
    } else {
        (1.0 - lambda) * u[i] + lambda * u[i + 1]
    };
    Ok(FkSolution {
        grid: *grid,
        terminal: u,
        value,
        slice_max,
        slice_min,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub nodes: usize,
    pub time_steps: usize,
    pub value: f64,
    /// Distance to the extrapolated reference.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Richardson extrapolation from the two finest grids, assuming
    /// second-order convergence.
    pub reference: f64,
}

impl ConvergenceTable {
    /// `error[k] / error[k+1]` for consecutive grids.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[0].error / w[1].error)
            .collect()
    }
}

/// Solve on each of a sequence of nested grids (same domain and `w0`, each
/// doubling the spatial intervals of the previous one).
pub fn convergence_study(
    coeffs: &GeneratorCoefficients1D,
    potential: &Potential,
    sigma: &Activation,
    x: f64,
    grids: &[Grid1D],
) -> Result<ConvergenceTable> {
    if grids.len() < 3 {
        return Err(Error::InvalidArgument(alloc::format!(
            "a convergence study needs at least 3 grids, got {}",
            grids.len()
        )));
    }
    for pair in grids.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.bounds() != b.bounds() || a.w0() != b.w0() || (b.nodes() - 1) != 2 * (a.nodes() - 1) {
            return Err(Error::InvalidArgument(
                "convergence grids must share the domain and double the spatial intervals".into(),
            ));
        }
    }
    let values = grids
        .iter()
        .map(|g| solve_fk(coeffs, potential, sigma, x, g))
        .collect::<Result<Vec<_>>>()?;
    let (coarse, fine) = (values[values.len() - 2], values[values.len() - 1]);
    let reference = fine + (fine - coarse) / 3.0;
    let rows = grids
        .iter()
        .zip(&values)
        .map(|(g, &value)| ConvergenceRow {
            nodes: g.nodes(),
            time_steps: g.time_steps(),
            value,
            error: (value - reference).abs(),
        })
        .collect();
    Ok(ConvergenceTable { rows, reference })
}

/// Mean and standard deviation of `W₁` for a scalar linear model
/// `dW = θ₁ W dt + Σ θ₂ᵢ W ∘ dVⁱ`, which is log-normal.
pub fn scalar_linear_spread(model: &SdeModel) -> Option<(f64, f64)> {
    let SdeKind::Linear(g) = model.kind() else {
        return None;
    };
    if model.state_shape() != (1, 1) {
        return None;
    }
    let w0 = model.w0()[(0, 0)];
    let a = g.drift[(0, 0)];
    let s2: f64 = g.diffusion.iter().map(|b| b[(0, 0)] * b[(0, 0)]).sum();
    let mean = w0 * math::exp(a + 0.5 * s2);
    let second = w0 * w0 * math::exp(2.0 * a + 2.0 * s2);
    Some((mean, math::sqrt((second - mean * mean).max(0.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::Generators;
    use crate::realization::{realize_mc, ReadoutSpec};
    use crate::sde::{GeneralFields, MatrixFn, TimeGrid, VectorFn};
    use alloc::vec;
    use nalgebra::DVector;

    const ONE: Activation = Activation::Custom {
        name: "one",
        value: |_| 1.0,
        derivative: |_| 0.0,
    };

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

    fn benchmark_grid(model: &SdeModel, nodes: usize, steps: usize) -> Grid1D {
        let (mean, sd) = scalar_linear_spread(model).unwrap();
        let w0 = model.w0()[(0, 0)];
        Grid1D::centered(w0, (mean - w0).abs() + 6.0 * sd, nodes, steps).unwrap()
    }

    #[test]
    fn heat_flow_preserves_affine() {
        let coeffs = GeneratorCoefficients1D::constant(0.0, 0.5);
        let grid = Grid1D::new(-5.0, 7.0, 101, 50, 0.7).unwrap();
        let v = solve_fk(&coeffs, &Potential::Zero, &Activation::Identity, 1.3, &grid).unwrap();
        assert!((v - 0.7 * 1.3).abs() <= 1e-8);
    }

    #[test]
    fn constant_potential_factorizes() {
        let model = scalar_linear(-0.2, 0.4, 1.0);
        let coeffs = GeneratorCoefficients1D::from_model(&model).unwrap();
        let grid = benchmark_grid(&model, 201, 100);
        let base = solve_fk(&coeffs, &Potential::Zero, &Activation::Tanh, 0.9, &grid).unwrap();
        for c in [-1.5, 0.4] {
            let v = solve_fk(&coeffs, &Potential::Constant(c), &Activation::Tanh, 0.9, &grid).unwrap();
            let expected = libm::exp(c) * base;
            assert!((v - expected).abs() <= 1e-8 * expected.abs());
        }
    }

    #[test]
    fn constants_are_harmonic_and_solves_are_deterministic() {
        let model = scalar_linear(0.3, 0.5, 1.2);
        let coeffs = GeneratorCoefficients1D::from_model(&model).unwrap();
        let grid = benchmark_grid(&model, 51, 20);
        let grids = [grid, grid.refined(2), grid.refined(4)];
        let table = convergence_study(&coeffs, &Potential::Zero, &ONE, 0.5, &grids).unwrap();
        for row in &table.rows {
            assert!((row.value - 1.0).abs() <= 1e-12);
        }
        let a = solve_fk_profile(&coeffs, &Potential::Zero, &Activation::Tanh, 0.8, &grid).unwrap();
        let b = solve_fk_profile(&coeffs, &Potential::Zero, &Activation::Tanh, 0.8, &grid).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.slice_max.len(), 21);
    }

    #[test]
    fn second_order_self_convergence() {
        let model = scalar_linear(-0.2, 0.4, 1.0);
        let coeffs = GeneratorCoefficients1D::from_model(&model).unwrap();
        let g = benchmark_grid(&model, 51, 25);
        let grids = [g, g.refined(2), g.refined(4), g.refined(8)];
        let table = convergence_study(&coeffs, &Potential::Zero, &Activation::Tanh, 2.0, &grids).unwrap();
        let r = table.ratios()[0];
        assert!((3.0..=6.0).contains(&r), "ratio {r}, table {table:?}");
    }

    #[test]
    fn maximum_principle_with_nonpositive_potential() {
        let model = scalar_linear(0.1, 0.6, 0.5);
        let coeffs = GeneratorCoefficients1D::from_model(&model).unwrap();
        let grid = benchmark_grid(&model, 101, 80);
        let h = Potential::Custom(Arc::new(|w: &DMatrix<f64>, t: f64| -w[(0, 0)] * w[(0, 0)] * (1.0 + t)));
        let sol = solve_fk_profile(&coeffs, &h, &Activation::Tanh, 1.7, &grid).unwrap();
        let sup0 = sol.slice_max[0].max(-sol.slice_min[0]);
        for (hi, lo) in sol.slice_max.iter().zip(&sol.slice_min) {
            assert!(*hi <= sup0 + 1e-10 && -*lo <= sup0 + 1e-10);
        }
        // |u(w0, 1)| ≤ e^{sup h} sup|σ| with sup h = c
        let c = -0.3;
        let v = solve_fk(&coeffs, &Potential::Constant(c), &Activation::Tanh, 1.7, &grid).unwrap();
        assert!(v.abs() <= libm::exp(c));
    }

    #[test]
    fn agrees_with_monte_carlo() {
        let model = scalar_linear(-0.2, 0.4, 1.0);
        let x = 0.9;
        let coeffs = GeneratorCoefficients1D::from_model(&model).unwrap();
        let pde = solve_fk(&coeffs, &Potential::Zero, &Activation::Tanh, x, &benchmark_grid(&model, 801, 400)).unwrap();
        let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh };
        let mc = realize_mc(&model, &readout, &Potential::Zero, &DVector::from_element(1, x), 100_000, &TimeGrid::unit(4), 12)
            .unwrap();
        assert!((pde - mc.mean).abs() <= 3.0 * mc.stderr + 1e-3, "pde {pde} mc {} ± {}", mc.mean, mc.stderr);
    }

    #[test]
    fn general_model_coefficients_match_linear() {
        let (a, b) = (0.3, -0.7);
        let fields = GeneralFields {
            dim: 1,
            drift: Arc::new(move |w: &DVector<f64>| w * a),
            diffusion: vec![Arc::new(move |w: &DVector<f64>| w * b) as VectorFn],
            diffusion_jacobians: Some(vec![Arc::new(move |_: &DVector<f64>| DMatrix::from_element(1, 1, b)) as MatrixFn]),
        };
        let general = GeneratorCoefficients1D::from_model(&SdeModel::general(fields, DVector::from_element(1, 1.0)).unwrap()).unwrap();
        let linear = GeneratorCoefficients1D::from_model(&scalar_linear(a, b, 1.0)).unwrap();
        for w in [-2.0, 0.0, 0.4, 3.0] {
            assert!(((general.drift)(w) - (linear.drift)(w)).abs() <= 1e-14);
            assert!(((general.diffusion)(w) - (linear.diffusion)(w)).abs() <= 1e-14);
            assert!(((linear.drift)(w) - (a + 0.5 * b * b) * w).abs() <= 1e-14);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Grid1D::new(0.0, 1.0, 50, 10, 0.5).is_err());
        assert!(Grid1D::new(0.0, 1.0, 51, 10, 1.0).is_err());
        assert!(Grid1D::new(0.0, 1.0, 51, 0, 0.5).is_err());
        let g = Grid1D::new(0.0, 1.0, 51, 10, 0.5).unwrap();
        let coeffs = GeneratorCoefficients1D::constant(0.0, 0.5);
        assert!(convergence_study(&coeffs, &Potential::Zero, &Activation::Tanh, 1.0, &[g, g.refined(2)]).is_err());
        assert!(convergence_study(&coeffs, &Potential::Zero, &Activation::Tanh, 1.0, &[g, g, g]).is_err());
        let negative = GeneratorCoefficients1D::constant(0.0, -1.0);
        assert!(solve_fk(&negative, &Potential::Zero, &Activation::Tanh, 1.0, &g).is_err());
        let square = SdeModel::linear(
            Generators { drift: DMatrix::zeros(2, 2), diffusion: vec![DMatrix::zeros(2, 2)] },
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        assert!(matches!(GeneratorCoefficients1D::from_model(&square), Err(Error::Configuration(_))));
    }
}
