//! Scalar nonlinearities with the derivatives the bracket and Itô machinery need.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Coordinatewise nonlinearity `σ`.
///
/// Built-in variants know derivatives of every order. A `Custom` activation
/// supplies `σ` and `σ'` only, which is enough for single brackets but not for
/// nested ones.
#[derive(Clone, Copy, Debug)]
pub enum Activation {
    Tanh,
    Identity,
    /// `σ(r) = 1 + r³`
    CubicPlusOne,
    Custom {
        name: &'static str,
        value: fn(f64) -> f64,
        derivative: fn(f64) -> f64,
    },
}

impl PartialEq for Activation {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
            Activation::CubicPlusOne => "cubic_plus_one",
            Activation::Custom { name, .. } => name,
        }
    }

    /// Look up a built-in activation by its registry name.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            "cubic_plus_one" => Some(Activation::CubicPlusOne),
            _ => None,
        }
    }

    /// Highest derivative order available, `None` meaning unbounded.
    pub fn max_order(&self) -> Option<usize> {
        match self {
            Activation::Custom { .. } => Some(1),
            _ => None,
        }
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(r),
            Activation::Identity => r,
            Activation::CubicPlusOne => 1.0 + r * r * r,
            Activation::Custom { value, .. } => value(r),
        }
    }

    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = math::tanh(r);
                1.0 - t * t
            }
            Activation::Identity => 1.0,
            Activation::CubicPlusOne => 3.0 * r * r,
            Activation::Custom { derivative, .. } => derivative(r),
        }
    }

    /// `[σ(r), σ'(r), …, σ⁽ᵏ⁾(r)]`.
    pub fn derivatives(&self, r: f64, order: usize) -> Result<Vec<f64>> {
        if let Some(max) = self.max_order() {
            if order > max {
                return Err(Error::NotDifferentiable {
                    name: self.name().to_string(),
                    order,
                });
            }
        }
        let mut out = Vec::with_capacity(order + 1);
        match self {
            Activation::Tanh => {
                // σ⁽ʲ⁾ = P_j(tanh r) with P_0(t) = t and P_{j+1} = (1 - t²) P_j'
                let t = math::tanh(r);
                let mut poly: Vec<f64> = alloc::vec![0.0, 1.0];
                for j in 0..=order {
                    out.push(eval_poly(&poly, t));
                    if j < order {
                        poly = tanh_next(&poly);
                    }
                }
            }
            Activation::Identity => {
                for j in 0..=order {
                    out.push(match j {
                        0 => r,
                        1 => 1.0,
                        _ => 0.0,
                    });
                }
            }
            Activation::CubicPlusOne => {
                for j in 0..=order {
                    out.push(match j {
                        0 => 1.0 + r * r * r,
                        1 => 3.0 * r * r,
                        2 => 6.0 * r,
                        3 => 6.0,
                        _ => 0.0,
                    });
                }
            }
            Activation::Custom {
                value, derivative, ..
            } => {
                out.push(value(r));
                if order >= 1 {
                    out.push(derivative(r));
                }
            }
        }
        Ok(out)
    }
}

impl core::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Activation::from_name(s.trim()).ok_or_else(|| alloc::format!("unknown activation `{s}`"))
    }
}

fn eval_poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Coefficients of `(1 - t²) p'(t)`.
fn tanh_next(p: &[f64]) -> Vec<f64> {
    let deriv: Vec<f64> = p
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect();
    let mut out = alloc::vec![0.0; deriv.len() + 2];
    for (k, c) in deriv.iter().enumerate() {
        out[k] += c;
        out[k + 2] -= c;
    }
    out
}
