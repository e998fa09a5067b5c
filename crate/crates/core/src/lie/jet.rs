//! Nested dual numbers of run-time depth.
//!
//! A jet of depth `L` is an element of `R[ε₁,…,ε_L]/(ε_i²)`, stored as `2^L`
//! coefficients indexed by the bitmask of the ε's present. Lifting a depth-`L`
//! jet pair `(re, eps)` to `re + eps·ε_{L+1}` is how each level of an iterated
//! bracket takes one more directional derivative.

use alloc::vec::Vec;

use crate::activation::Activation;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Jet {
    depth: usize,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant(depth: usize, value: f64) -> Self {
        let mut coeffs = alloc::vec![0.0; 1 << depth];
        coeffs[0] = value;
        Self { depth, coeffs }
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `re + eps·ε_{L+1}`; both parts must share a depth.
    pub fn lift(re: &Jet, eps: &Jet) -> Jet {
        debug_assert_eq!(re.depth, eps.depth);
        let mut coeffs = Vec::with_capacity(2 * re.coeffs.len());
        coeffs.extend_from_slice(&re.coeffs);
        coeffs.extend_from_slice(&eps.coeffs);
        Jet {
            depth: re.depth + 1,
            coeffs,
        }
    }

    /// Inverse of [`Jet::lift`]: split off the outermost ε.
    pub fn split(&self) -> (Jet, Jet) {
        let half = self.coeffs.len() / 2;
        (
            Jet {
                depth: self.depth - 1,
                coeffs: self.coeffs[..half].to_vec(),
            },
            Jet {
                depth: self.depth - 1,
                coeffs: self.coeffs[half..].to_vec(),
            },
        )
    }

    pub fn add(&self, other: &Jet) -> Jet {
        Jet {
            depth: self.depth,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        Jet {
            depth: self.depth,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            depth: self.depth,
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }

    /// Product: subset convolution over the ε bitmasks.
    pub fn mul(&self, other: &Jet) -> Jet {
        let len = self.coeffs.len();
        let mut coeffs = alloc::vec![0.0; len];
        for (mask, slot) in coeffs.iter_mut().enumerate() {
            let mut sub = mask;
            let mut acc = 0.0;
            loop {
                acc += self.coeffs[sub] * other.coeffs[mask ^ sub];
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & mask;
            }
            *slot = acc;
        }
        Jet {
            depth: self.depth,
            coeffs,
        }
    }

    /// `f(self)` given `[f(x₀), f'(x₀), …, f⁽ᴸ⁾(x₀)]` at `x₀ = self.value()`.
    fn compose(&self, derivs: &[f64]) -> Jet {
        let mut nil = self.clone();
        nil.coeffs[0] = 0.0;
        let mut out = Jet::constant(self.depth, derivs[0]);
        let mut power = nil.clone();
        let mut factorial = 1.0;
        for (j, d) in derivs.iter().enumerate().skip(1) {
            factorial *= j as f64;
            out = out.add(&power.scale(d / factorial));
            if j < self.depth {
                power = power.mul(&nil);
            } else {
                break;
            }
        }
        out
    }

    pub fn activate(&self, sigma: &Activation) -> Result<Jet> {
        let derivs = sigma.derivatives(self.value(), self.depth)?;
        Ok(self.compose(&derivs))
    }

    /// `σ'(self)`, which needs one derivative order more than `activate`.
    pub fn activate_derivative(&self, sigma: &Activation) -> Result<Jet> {
        let derivs = sigma.derivatives(self.value(), self.depth + 1)?;
        Ok(self.compose(&derivs[1..]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_and_split_invert() {
        let a = Jet::lift(&Jet::constant(0, 1.5), &Jet::constant(0, -2.0));
        let b = Jet::lift(&a, &a.scale(3.0));
        let (re, eps) = b.split();
        assert_eq!(re, a);
        assert_eq!(eps, a.scale(3.0));
    }

    #[test]
    fn nested_duals_give_second_derivative() {
        // x = x0 + ε₁ + ε₂: coefficient of ε₁ε₂ in f(x) is f''(x0)
        let x0 = 0.3;
        let one = Jet::lift(&Jet::constant(0, x0), &Jet::constant(0, 1.0));
        let x = Jet::lift(&one, &Jet::lift(&Jet::constant(0, 1.0), &Jet::constant(0, 0.0)));
        let y = x.activate(&Activation::Tanh).unwrap();
        let d = Activation::Tanh.derivatives(x0, 2).unwrap();
        assert!((y.coeffs[0] - d[0]).abs() < 1e-15);
        assert!((y.coeffs[1] - d[1]).abs() < 1e-15);
        assert!((y.coeffs[2] - d[1]).abs() < 1e-15);
        assert!((y.coeffs[3] - d[2]).abs() < 1e-15);
    }

    #[test]
    fn product_rule() {
        let a = Jet::lift(&Jet::constant(0, 2.0), &Jet::constant(0, 3.0));
        let b = Jet::lift(&Jet::constant(0, 5.0), &Jet::constant(0, 7.0));
        let p = a.mul(&b);
        assert_eq!(p.coeffs, alloc::vec![10.0, 2.0 * 7.0 + 3.0 * 5.0]);
    }
}
