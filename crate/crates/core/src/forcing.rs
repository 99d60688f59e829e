//! Right-hand sides `K(x) f(u)` with `f(u) = e^{4u} p(u)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The exponent in `f(u) = e^{beta u} p(u)`. Only the conformally invariant
/// value is supported.
pub const BETA: f64 = 4.0;

/// `f(u) = e^{4u} p(u)` with `p` a polynomial (ascending coefficients).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub p: Vec<f64>,
}

impl ForcingSpec {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("forcing polynomial must have finite coefficients".into()));
        }
        Ok(Self { p })
    }

    /// `p = 3/2`, the normalization used throughout for constant forcing.
    pub fn three_halves() -> Self {
        Self { p: vec![1.5] }
    }

    pub fn is_three_halves(&self) -> bool {
        self.p[0] == 1.5 && self.p[1..].iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { p: self.p.iter().map(|x| c * x).collect() }
    }

    pub fn p(&self, u: f64) -> f64 {
        horner(&self.p, u)
    }

    pub fn f(&self, u: f64) -> f64 {
        (BETA * u).exp() * self.p(u)
    }

    /// Coefficients of `R` with `F(u) = e^{4u} R(u)` and `F' = f`:
    /// `R = sum_k (-1)^k p^(k) / 4^(k+1)`.
    fn antiderivative_poly(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.p.len()];
        let mut deriv = self.p.clone();
        let mut scale = 1.0 / BETA;
        let mut sign = 1.0;
        while !deriv.is_empty() {
            for (ri, di) in r.iter_mut().zip(&deriv) {
                *ri += sign * scale * di;
            }
            deriv = deriv.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
            scale /= BETA;
            sign = -sign;
        }
        r
    }

    /// An antiderivative of `f`, normalized so that `F(u) -> 0` as `u -> -inf`.
    pub fn big_f(&self, u: f64) -> f64 {
        (BETA * u).exp() * horner(&self.antiderivative_poly(), u)
    }

    /// Evaluator that caches the antiderivative coefficients.
    pub fn antiderivative(&self) -> Antiderivative {
        Antiderivative { r: self.antiderivative_poly() }
    }
}

#[derive(Clone, Debug)]
pub struct Antiderivative {
    r: Vec<f64>,
}

impl Antiderivative {
    pub fn eval(&self, u: f64) -> f64 {
        (BETA * u).exp() * horner(&self.r, u)
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// The positive weight `K(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KSpec {
    Constant { value: f64 },
    /// `base + amplitude * exp(-|x|^2 / width^2)`
    Gaussian { base: f64, amplitude: f64, width: f64 },
}

impl Default for KSpec {
    fn default() -> Self {
        KSpec::Constant { value: 1.0 }
    }
}

impl KSpec {
    pub fn is_unit(&self) -> bool {
        matches!(self, KSpec::Constant { value } if *value == 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KSpec::Constant { value } => value > 0.0,
            KSpec::Gaussian { base, amplitude, width } => base > 0.0 && base + amplitude.min(0.0) > 0.0 && width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid("K must be positive".into()))
        }
    }

    pub fn at_radius(&self, r: f64) -> f64 {
        match *self {
            KSpec::Constant { value } => value,
            KSpec::Gaussian { base, amplitude, width } => base + amplitude * (-(r / width).powi(2)).exp(),
        }
    }

    /// `<x, grad K>` at `|x| = r`.
    pub fn radial_derivative_times_r(&self, r: f64) -> f64 {
        match *self {
            KSpec::Constant { .. } => 0.0,
            KSpec::Gaussian { amplitude, width, .. } => {
                let z = (r / width).powi(2);
                -2.0 * amplitude * z * (-z).exp()
            }
        }
    }

    pub fn at(&self, x: [f64; 4]) -> f64 {
        self.at_radius(crate::symm::norm4(x))
    }

    pub fn x_dot_grad(&self, x: [f64; 4]) -> f64 {
        self.radial_derivative_times_r(crate::symm::norm4(x))
    }
}
