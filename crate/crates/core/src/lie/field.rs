use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::jet::Jet;
use crate::activation::Activation;
use crate::error::{Error, Result};

/// Deepest `ad^k` accepted by [`iterated_ad`]; the expression size doubles per level.
pub const MAX_BRACKET_DEPTH: usize = 4;

/// The vector field `g_W(z) = σ(Wz)` with `σ` applied coordinatewise.
#[derive(Clone, Debug)]
pub struct NeuralField {
    pub weights: DMatrix<f64>,
    pub sigma: Activation,
}

impl NeuralField {
    pub fn new(weights: DMatrix<f64>, sigma: Activation) -> Self {
        Self { weights, sigma }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn check_input(&self, z: usize) -> Result<()> {
        if z != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "neural field input",
                expected: self.input_dim(),
                found: z,
            });
        }
        Ok(())
    }

    fn preactivation(&self, z: &[f64]) -> Vec<f64> {
        (0..self.output_dim())
            .map(|i| {
                let mut acc = 0.0;
                for (j, zj) in z.iter().enumerate() {
                    acc += self.weights[(i, j)] * zj;
                }
                acc
            })
            .collect()
    }

    pub fn eval(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(z.len())?;
        let pre = self.preactivation(z.as_slice());
        Ok(DVector::from_iterator(
            pre.len(),
            pre.iter().map(|p| self.sigma.value(*p)),
        ))
    }

    /// `diag(σ'(Wz)) · W`.
    pub fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_input(z.len())?;
        let pre = self.preactivation(z.as_slice());
        Ok(DMatrix::from_fn(self.output_dim(), self.input_dim(), |i, j| {
            self.sigma.derivative(pre[i]) * self.weights[(i, j)]
        }))
    }

    /// `Dg(z)·v` without forming the Jacobian.
    fn jacobian_apply(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let pre = self.preactivation(z);
        let wv = self.preactivation(v);
        pre.iter()
            .zip(&wv)
            .map(|(p, s)| self.sigma.derivative(*p) * s)
            .collect()
    }

    fn preactivation_jet(&self, z: &[Jet]) -> Vec<Jet> {
        let depth_zero = Jet::constant(0, 0.0);
        let zero = z
            .first()
            .map(|j| j.scale(0.0))
            .unwrap_or(depth_zero);
        (0..self.output_dim())
            .map(|i| {
                let mut acc = zero.clone();
                for (j, zj) in z.iter().enumerate() {
                    acc = acc.add(&zj.scale(self.weights[(i, j)]));
                }
                acc
            })
            .collect()
    }

    fn eval_jet(&self, z: &[Jet]) -> Result<Vec<Jet>> {
        self.preactivation_jet(z)
            .iter()
            .map(|p| p.activate(&self.sigma))
            .collect()
    }

    fn jacobian_apply_jet(&self, z: &[Jet], v: &[Jet]) -> Result<Vec<Jet>> {
        let pre = self.preactivation_jet(z);
        let wv = self.preactivation_jet(v);
        pre.iter()
            .zip(&wv)
            .map(|(p, s)| Ok(p.activate_derivative(&self.sigma)?.mul(s)))
            .collect()
    }
}

fn check_pair(g: &NeuralField, g2: &NeuralField, z: &DVector<f64>) -> Result<()> {
    for f in [g, g2] {
        if f.output_dim() != f.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "vector field (square weights)",
                expected: f.input_dim(),
                found: f.output_dim(),
            });
        }
    }
    if g.input_dim() != g2.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "bracket operands",
            expected: g.input_dim(),
            found: g2.input_dim(),
        });
    }
    g.check_input(z.len())
}

/// Lie bracket of neural vector fields at `z`.
///
/// Sign convention: `[f, g](z) = Dg(z) f(z) − Df(z) g(z)`, so that for
/// `σ = identity` the bracket of `z ↦ Wz` and `z ↦ W'z` is `(W'W − WW')z`.
pub fn vf_bracket(g: &NeuralField, g2: &NeuralField, z: &DVector<f64>) -> Result<DVector<f64>> {
    check_pair(g, g2, z)?;
    let gz = g.eval(z)?;
    let g2z = g2.eval(z)?;
    let forward = g2.jacobian_apply(z.as_slice(), gz.as_slice());
    let backward = g.jacobian_apply(z.as_slice(), g2z.as_slice());
    Ok(DVector::from_iterator(
        forward.len(),
        forward.iter().zip(&backward).map(|(a, b)| a - b),
    ))
}

/// `ad_g^k g'` evaluated at `z`, with `ad_g^0 g' = g'` and
/// `ad_g^{k+1} g' = [g, ad_g^k g']`.
///
/// The directional derivative of each inner bracket is taken by nested
/// forward-mode dual numbers, so no finite differencing is involved.
pub fn iterated_ad(
    g: &NeuralField,
    g2: &NeuralField,
    k: usize,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    if k > MAX_BRACKET_DEPTH {
        return Err(Error::DepthExceeded {
            depth: k,
            max: MAX_BRACKET_DEPTH,
        });
    }
    check_pair(g, g2, z)?;
    let z0: Vec<Jet> = z.iter().map(|v| Jet::constant(0, *v)).collect();
    let out = ad_jet(g, g2, k, &z0)?;
    Ok(DVector::from_iterator(out.len(), out.iter().map(Jet::value)))
}

fn ad_jet(g: &NeuralField, g2: &NeuralField, k: usize, z: &[Jet]) -> Result<Vec<Jet>> {
    if k == 0 {
        return g2.eval_jet(z);
    }
    // ad^k = D(ad^{k-1})·g − Dg·ad^{k-1}
    let gz = g.eval_jet(z)?;
    let lifted: Vec<Jet> = z.iter().zip(&gz).map(|(a, b)| Jet::lift(a, b)).collect();
    let inner = ad_jet(g, g2, k - 1, &lifted)?;
    let (value, directional): (Vec<Jet>, Vec<Jet>) = inner.iter().map(Jet::split).unzip();
    let correction = g.jacobian_apply_jet(z, &value)?;
    Ok(directional
        .iter()
        .zip(&correction)
        .map(|(a, b)| a.sub(b))
        .collect())
}

/// Degree of the interpolating polynomial through `(points, values)`:
/// the highest power whose coefficient exceeds `rel_tol` times the largest one.
pub fn fitted_degree(points: &[f64], values: &[f64], rel_tol: f64) -> Result<usize> {
    if points.len() != values.len() || points.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "polynomial fit samples",
            expected: points.len(),
            found: values.len(),
        });
    }
    let n = points.len();
    let vander = DMatrix::from_fn(n, n, |i, j| crate::math::powi(points[i], j as i32));
    let rhs = DVector::from_column_slice(values);
    let coeffs = vander
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Vandermonde system (repeated points?)"))?;
    let scale = coeffs.iter().fold(0.0, |m: f64, c| m.max(c.abs()));
    if scale == 0.0 {
        return Ok(0);
    }
    Ok((0..n)
        .rev()
        .find(|&j| coeffs[j].abs() > rel_tol * scale)
        .unwrap_or(0))
}
