//! Matrix Lie-algebra bases, linearly parametrized generators, and brackets
//! of matrix and neural vector fields.

mod field;
mod jet;

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

pub use field::{fitted_degree, iterated_ad, vf_bracket, NeuralField, MAX_BRACKET_DEPTH};

/// An ordered list of `d` real `n×n` generators `G_1, …, G_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixBasis {
    n: usize,
    generators: Vec<DMatrix<f64>>,
}

impl MatrixBasis {
    /// Canonical basis of `Skew(n)`: one generator per pair `p < q` in
    /// lexicographic order, `+1` at `(p, q)` and `-1` at `(q, p)`.
    pub fn skew(n: usize) -> Self {
        let mut generators = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for p in 0..n {
            for q in (p + 1)..n {
                let mut g = DMatrix::zeros(n, n);
                g[(p, q)] = 1.0;
                g[(q, p)] = -1.0;
                generators.push(g);
            }
        }
        Self { n, generators }
    }

    /// Wrap an arbitrary list of square generators of one size.
    pub fn from_generators(generators: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = generators.first().map(|g| g.nrows()).unwrap_or(0);
        for g in &generators {
            if !g.is_square() || g.nrows() != n {
                return Err(Error::DimensionMismatch {
                    context: "basis generators",
                    expected: n,
                    found: g.nrows().max(g.ncols()),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput("basis generator"));
            }
        }
        Ok(Self { n, generators })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    pub fn is_skew(&self) -> bool {
        self.generators.iter().all(linalg::is_skew)
    }
}

/// Canonical `Skew(n)` basis of length `n(n-1)/2`.
pub fn skew_basis(n: usize) -> MatrixBasis {
    MatrixBasis::skew(n)
}

/// Coefficients `θ_ij`, `i = 0..=m`, `j = 1..=d`, stored row-major.
/// Row 0 parametrizes the drift, row `i ≥ 1` the `i`-th diffusion generator.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaParams {
    m: usize,
    d: usize,
    coeffs: Vec<f64>,
}

impl ThetaParams {
    pub fn new(m: usize, d: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != (m + 1) * d {
            return Err(Error::DimensionMismatch {
                context: "theta coefficients ((m+1)·d)",
                expected: (m + 1) * d,
                found: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteInput("theta"));
        }
        Ok(Self { m, d, coeffs })
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            m,
            d,
            coeffs: alloc::vec![0.0; (m + 1) * d],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.d + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    /// Same shape, new coefficients.
    pub fn with_coeffs(&self, coeffs: &[f64]) -> Result<Self> {
        Self::new(self.m, self.d, coeffs.to_vec())
    }
}

/// Drift generator `A` and diffusion generators `B_1, …, B_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generators {
    pub drift: DMatrix<f64>,
    pub diffusion: Vec<DMatrix<f64>>,
}

impl Generators {
    pub fn n(&self) -> usize {
        self.drift.nrows()
    }

    pub fn is_skew(&self) -> bool {
        linalg::is_skew(&self.drift) && self.diffusion.iter().all(linalg::is_skew)
    }
}

/// `A(θ) = Σ_j θ_0j G_j` and `B_i(θ) = Σ_j θ_ij G_j`.
pub fn assemble_generators(theta: &ThetaParams, basis: &MatrixBasis) -> Result<Generators> {
    if theta.d() != basis.len() {
        return Err(Error::InvalidArgument(format!(
            "theta has d = {} columns but the basis has {} generators",
            theta.d(),
            basis.len()
        )));
    }
    let n = basis.n();
    let combine = |row: usize| {
        let mut acc = DMatrix::zeros(n, n);
        for (j, g) in basis.generators().iter().enumerate() {
            let c = theta.get(row, j);
            if c != 0.0 {
                acc += g * c;
            }
        }
        acc
    };
    Ok(Generators {
        drift: combine(0),
        diffusion: (1..=theta.m()).map(combine).collect(),
    })
}

/// `[X, Y] = XY − YX`.
pub fn commutator(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !x.is_square() || x.shape() != y.shape() {
        return Err(Error::DimensionMismatch {
            context: "commutator",
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    Ok(x * y - y * x)
}
