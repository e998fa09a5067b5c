//! Dense matrix kernels: the matrix exponential and a tridiagonal solver.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::math;

/// Coefficients of the diagonal [6/6] Padé approximant to `exp`.
const PADE6: [f64; 7] = [
    1.0,
    1.0 / 2.0,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// 1-norm bound below which the [6/6] approximant is accurate to ~1e-16.
const PADE6_THETA: f64 = 0.5;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a [6/6] Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, math::exp(a[(0, 0)]));
    }
    let norm = one_norm(a);
    let squarings = if norm > PADE6_THETA {
        squarings_ceil(math::ln(norm / PADE6_THETA) / core::f64::consts::LN_2)
    } else {
        0
    };
    let scaled = a / libm::ldexp(1.0, squarings as i32);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let odd = &scaled * (&id * PADE6[1] + &a2 * PADE6[3] + &a4 * PADE6[5]);
    let even = &id * PADE6[0] + &a2 * PADE6[2] + &a4 * PADE6[4] + &a6 * PADE6[6];
    let num = &even + &odd;
    let den = &even - &odd;
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for ‖A‖ ≤ 1/2");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn squarings_ceil(x: f64) -> u32 {
    let c = libm::ceil(x);
    if c <= 0.0 {
        0
    } else {
        c as u32
    }
}

/// Closed-form exponential of a 3×3 skew-symmetric matrix (Rodrigues).
///
/// The rotation vector is read from entries (2,1), (0,2) and (1,0); the
/// result matches `expm` up to roundoff.
pub fn expm_skew3(a: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert!(a.nrows() == 3 && a.ncols() == 3);
    let (wx, wy, wz) = (a[(2, 1)], a[(0, 2)], a[(1, 0)]);
    let t2 = wx * wx + wy * wy + wz * wz;
    let (s, c) = if t2 < 1e-8 {
        // sin t / t and (1 - cos t) / t² by their Taylor series
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
        )
    } else {
        let t = math::sqrt(t2);
        (math::sin(t) / t, (1.0 - math::cos(t)) / t2)
    };
    let k = DMatrix::from_row_slice(3, 3, &[0.0, -wz, wy, wz, 0.0, -wx, -wy, wx, 0.0]);
    let k2 = &k * &k;
    DMatrix::<f64>::identity(3, 3) + k * s + k2 * c
}

/// True when `a + aᵀ` vanishes exactly.
pub fn is_skew(a: &DMatrix<f64>) -> bool {
    a.is_square() && (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| a[(i, j)] == -a[(j, i)]))
}

/// Solve a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` multiplies `x[i-1]` (so `lower[0]` is ignored) and `upper[i]`
/// multiplies `x[i+1]` (so the last entry is ignored).
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::DimensionMismatch {
            context: "tridiagonal solve",
            expected: n,
            found: lower.len().min(upper.len()).min(rhs.len()),
        });
    }
    let mut c_prime = alloc::vec![0.0; n];
    let mut d_prime = alloc::vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < 1e-300 || !pivot.is_finite() {
        return Err(Error::Singular("tridiagonal solve (row 0)"));
    }
    c_prime[0] = upper[0] / pivot;
    d_prime[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c_prime[i - 1];
        if pivot.abs() < 1e-300 || !pivot.is_finite() {
            return Err(Error::Singular("tridiagonal solve"));
        }
        c_prime[i] = upper[i] / pivot;
        d_prime[i] = (rhs[i] - lower[i] * d_prime[i - 1]) / pivot;
    }
    let mut x = d_prime;
    for i in (0..n - 1).rev() {
        x[i] -= c_prime[i] * x[i + 1];
    }
    Ok(x)
}

/// Max-norm of a matrix, `max |a_ij|`.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
}

/// `‖aᵀa − I‖_∞` entrywise.
pub fn orthogonality_defect(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    max_abs(&(g - DMatrix::<f64>::identity(a.ncols(), a.ncols())))
}
