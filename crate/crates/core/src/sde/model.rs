use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::{assemble_generators, Generators, MatrixBasis, ThetaParams};
use crate::linalg;

/// A vector field `w ↦ F(w)` on `Rⁿ`.
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
/// A matrix-valued map of the state, used for Jacobians.
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Drift and diffusion columns given as callables on vector states.
///
/// The callables must be deterministic. Lipschitz continuity (needed for
/// strong solutions) is the caller's responsibility and is not checked.
#[derive(Clone)]
pub struct GeneralFields {
    pub dim: usize,
    pub drift: VectorFn,
    pub diffusion: Vec<VectorFn>,
    /// `∂b_i/∂w`, one per diffusion column; required for the Itô correction.
    pub diffusion_jacobians: Option<Vec<MatrixFn>>,
}

impl fmt::Debug for GeneralFields {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralFields")
            .field("dim", &self.dim)
            .field("noise_dim", &self.diffusion.len())
            .field("has_jacobians", &self.diffusion_jacobians.is_some())
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum SdeKind {
    /// `dW = A W dt + Σ B_i W ∘ dV^i`, acting on the left of an `n×c` state.
    Linear(Generators),
    /// `dW = a(W) dt + Σ b_i(W) ∘ dV^i` on vector states.
    General(GeneralFields),
}

/// Stratonovich SDE for the weight process with its deterministic initial state.
#[derive(Clone, Debug)]
pub struct SdeModel {
    kind: SdeKind,
    w0: DMatrix<f64>,
}

impl SdeModel {
    pub fn linear(generators: Generators, w0: DMatrix<f64>) -> Result<Self> {
        let n = generators.n();
        for g in core::iter::once(&generators.drift).chain(&generators.diffusion) {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "linear generators",
                    expected: n,
                    found: g.nrows().max(g.ncols()),
                });
            }
        }
        if w0.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "initial state rows",
                expected: n,
                found: w0.nrows(),
            });
        }
        if w0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("initial state"));
        }
        Ok(Self {
            kind: SdeKind::Linear(generators),
            w0,
        })
    }

    /// Linear model with generators `A(θ)`, `B_i(θ)` assembled from a basis.
    pub fn linear_from_theta(
        theta: &ThetaParams,
        basis: &MatrixBasis,
        w0: DMatrix<f64>,
    ) -> Result<Self> {
        Self::linear(assemble_generators(theta, basis)?, w0)
    }

    pub fn general(fields: GeneralFields, w0: DVector<f64>) -> Result<Self> {
        if w0.len() != fields.dim {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: fields.dim,
                found: w0.len(),
            });
        }
        if let Some(j) = &fields.diffusion_jacobians {
            if j.len() != fields.diffusion.len() {
                return Err(Error::DimensionMismatch {
                    context: "diffusion Jacobians",
                    expected: fields.diffusion.len(),
                    found: j.len(),
                });
            }
        }
        let n = w0.len();
        Ok(Self {
            kind: SdeKind::General(fields),
            w0: DMatrix::from_column_slice(n, 1, w0.as_slice()),
        })
    }

    pub fn kind(&self) -> &SdeKind {
        &self.kind
    }

    pub fn w0(&self) -> &DMatrix<f64> {
        &self.w0
    }

    pub fn noise_dim(&self) -> usize {
        match &self.kind {
            SdeKind::Linear(g) => g.diffusion.len(),
            SdeKind::General(f) => f.diffusion.len(),
        }
    }

    /// `(rows, cols)` of the state; `cols == 1` for vector states.
    pub fn state_shape(&self) -> (usize, usize) {
        self.w0.shape()
    }

    /// Linear with skew generators and `w0` on the unit sphere (vector state)
    /// or with orthonormal columns (matrix state).
    pub fn is_manifold_preserving(&self) -> bool {
        match &self.kind {
            SdeKind::Linear(g) if g.is_skew() => {
                if self.w0.ncols() == 1 {
                    (self.w0.norm() - 1.0).abs() <= 1e-12
                } else {
                    linalg::orthogonality_defect(&self.w0) <= 1e-12
                }
            }
            _ => false,
        }
    }

    pub(crate) fn drift_at(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            SdeKind::Linear(g) => &g.drift * w,
            SdeKind::General(f) => column_map(&f.drift, w),
        }
    }

    pub(crate) fn diffusion_at(&self, i: usize, w: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            SdeKind::Linear(g) => &g.diffusion[i] * w,
            SdeKind::General(f) => column_map(&f.diffusion[i], w),
        }
    }
}

fn column_map(f: &VectorFn, w: &DMatrix<f64>) -> DMatrix<f64> {
    let v = DVector::from_column_slice(w.as_slice());
    let out = f(&v);
    DMatrix::from_column_slice(out.len(), 1, out.as_slice())
}

/// Uniform grid on `[t0, t1]` with `steps` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
}

/// Step count used when a configuration does not name one.
pub const DEFAULT_STEPS: usize = 256;

impl Default for TimeGrid {
    fn default() -> Self {
        Self::unit(DEFAULT_STEPS)
    }
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "time grid needs t0 < t1, got [{t0}, {t1}]"
            )));
        }
        Ok(Self { t0, t1, steps })
    }

    /// `[0, 1]` with `steps` intervals.
    pub fn unit(steps: usize) -> Self {
        Self::new(0.0, 1.0, steps.max(1)).expect("unit grid is valid")
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn h(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.h()
        }
    }

    /// Same interval, `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            steps: self.steps * factor,
            ..*self
        }
    }
}
