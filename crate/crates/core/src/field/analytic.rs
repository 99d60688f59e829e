use std::sync::Arc;

use crate::radial::RadialProfile;
use crate::symm::{dot4, SymMat4};

use super::Jet2;

/// Fully populated third-derivative tensor `t[i][j][k] = d_i d_j d_k u`.
pub type Tensor3 = [[[f64; 4]; 4]; 4];

/// A scalar field on R^4 with closed-form derivatives.
pub trait AnalyticField: Send + Sync {
    fn value(&self, x: [f64; 4]) -> f64;
    fn gradient(&self, x: [f64; 4]) -> [f64; 4];
    fn hessian(&self, x: [f64; 4]) -> SymMat4;

    /// Third derivatives. The default differentiates the Hessian by centered
    /// differences and is only accurate to about 1e-8.
    fn third(&self, x: [f64; 4]) -> Tensor3 {
        let h = 1e-4;
        let mut t = [[[0.0; 4]; 4]; 4];
        for k in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let d = self.hessian(xp).sub(&self.hessian(xm)).scale(0.5 / h);
            for i in 0..4 {
                for j in 0..4 {
                    t[i][j][k] = d.get(i, j);
                }
            }
        }
        t
    }

    fn jet(&self, x: [f64; 4]) -> Jet2 {
        Jet2 { point: x, value: self.value(x), gradient: self.gradient(x), hessian: self.hessian(x) }
    }
}

/// Polynomial in four variables: `sum c * x^e`.
#[derive(Clone, Debug, Default)]
pub struct Polynomial4 {
    pub terms: Vec<(f64, [u32; 4])>,
}

impl Polynomial4 {
    pub fn new(terms: Vec<(f64, [u32; 4])>) -> Self {
        Self { terms }
    }

    /// `sum_i c_i x_i^2 / 2`
    pub fn diagonal_quadratic(c: [f64; 4]) -> Self {
        let mut terms = Vec::new();
        for (i, ci) in c.into_iter().enumerate() {
            let mut e = [0; 4];
            e[i] = 2;
            terms.push((0.5 * ci, e));
        }
        Self { terms }
    }

    fn eval_derivative(&self, x: [f64; 4], orders: &[usize]) -> f64 {
        let mut total = 0.0;
        for &(c, e) in &self.terms {
            let mut e = e;
            let mut coef = c;
            for &k in orders {
                if e[k] == 0 {
                    coef = 0.0;
                    break;
                }
                coef *= e[k] as f64;
                e[k] -= 1;
            }
            if coef == 0.0 {
                continue;
            }
            let mut m = coef;
            for (xi, &ei) in x.iter().zip(&e) {
                m *= xi.powi(ei as i32);
            }
            total += m;
        }
        total
    }
}

impl AnalyticField for Polynomial4 {
    fn value(&self, x: [f64; 4]) -> f64 {
        self.eval_derivative(x, &[])
    }

    fn gradient(&self, x: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| self.eval_derivative(x, &[i]))
    }

    fn hessian(&self, x: [f64; 4]) -> SymMat4 {
        let mut h = SymMat4::zero();
        for i in 0..4 {
            for j in i..4 {
                h.set(i, j, self.eval_derivative(x, &[i, j]));
            }
        }
        h
    }

    fn third(&self, x: [f64; 4]) -> Tensor3 {
        let mut t = [[[0.0; 4]; 4]; 4];
        for (i, ti) in t.iter_mut().enumerate() {
            for (j, tij) in ti.iter_mut().enumerate() {
                for (k, v) in tij.iter_mut().enumerate() {
                    *v = self.eval_derivative(x, &[i, j, k]);
                }
            }
        }
        t
    }
}

/// `amplitude * exp(c + b.x + x^T M x / 2)`; covers `exp(-|x|^2)` and
/// `exp(x1 x2)`.
#[derive(Clone, Debug)]
pub struct ExpQuadratic {
    pub amplitude: f64,
    pub c: f64,
    pub b: [f64; 4],
    pub m: SymMat4,
}

impl ExpQuadratic {
    pub fn gaussian() -> Self {
        Self { amplitude: 1.0, c: 0.0, b: [0.0; 4], m: SymMat4::identity().scale(-2.0) }
    }

    pub fn exp_x1x2() -> Self {
        let mut m = SymMat4::zero();
        m.set(0, 1, 1.0);
        Self { amplitude: 1.0, c: 0.0, b: [0.0; 4], m }
    }

    fn phi(&self, x: [f64; 4]) -> (f64, [f64; 4]) {
        let mx = self.m.mul_vec(x);
        let phi = self.c + dot4(self.b, x) + 0.5 * dot4(x, mx);
        (phi, std::array::from_fn(|i| self.b[i] + mx[i]))
    }
}

impl AnalyticField for ExpQuadratic {
    fn value(&self, x: [f64; 4]) -> f64 {
        self.amplitude * self.phi(x).0.exp()
    }

    fn gradient(&self, x: [f64; 4]) -> [f64; 4] {
        let (p, d) = self.phi(x);
        let u = self.amplitude * p.exp();
        d.map(|di| u * di)
    }

    fn hessian(&self, x: [f64; 4]) -> SymMat4 {
        let (p, d) = self.phi(x);
        let u = self.amplitude * p.exp();
        SymMat4::outer(d).add(&self.m).scale(u)
    }

    fn third(&self, x: [f64; 4]) -> Tensor3 {
        let (p, d) = self.phi(x);
        let u = self.amplitude * p.exp();
        let m = &self.m;
        let mut t = [[[0.0; 4]; 4]; 4];
        for (i, ti) in t.iter_mut().enumerate() {
            for (j, tij) in ti.iter_mut().enumerate() {
                for (k, v) in tij.iter_mut().enumerate() {
                    *v = u * (d[i] * d[j] * d[k] + m.get(i, j) * d[k] + m.get(i, k) * d[j] + m.get(j, k) * d[i]);
                }
            }
        }
        t
    }
}

/// `u(x) = U(ln |x|)` for a radial profile `U`, evaluated from the profile
/// interpolant.
#[derive(Clone, Debug)]
pub struct RadialProfileField {
    pub profile: Arc<RadialProfile>,
}

impl RadialProfileField {
    pub fn new(profile: Arc<RadialProfile>) -> Self {
        Self { profile }
    }
}

impl AnalyticField for RadialProfileField {
    fn value(&self, x: [f64; 4]) -> f64 {
        self.profile.radial_derivatives(dot4(x, x).sqrt()).0
    }

    fn gradient(&self, x: [f64; 4]) -> [f64; 4] {
        let (_, ur_over_r, _) = self.profile.radial_derivatives(dot4(x, x).sqrt());
        x.map(|xi| ur_over_r * xi)
    }

    fn hessian(&self, x: [f64; 4]) -> SymMat4 {
        let r2 = dot4(x, x);
        let (_, a, urr) = self.profile.radial_derivatives(r2.sqrt());
        if r2 == 0.0 {
            return SymMat4::identity().scale(a);
        }
        SymMat4::outer(x).scale((urr - a) / r2).add_identity(a)
    }
}
