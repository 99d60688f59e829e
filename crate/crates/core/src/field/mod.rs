//! Second-order jets of scalar fields on R^4 and the pointwise identities of
//! the tensor `A(rho, u) = -D^2 u + rho du (x) du - (rho/2)|du|^2 I`.
//!
//! Fields come either from closed-form expressions ([`AnalyticField`]) or from
//! samples on a regular grid ([`ScalarField4`]).

mod analytic;
mod cone;
mod frame;
mod grid;

pub use analytic::{AnalyticField, ExpQuadratic, Polynomial4, RadialProfileField, Tensor3};
pub use cone::{cone_check, ConeReport};
pub use frame::{frame_decompose, frame_decompose_with_tangent, FrameDecomp};
pub use grid::{ScalarField4, JET_MARGIN, NESTED_MARGIN};

use serde::{Deserialize, Serialize};

use crate::symm::{dot4, SymMat4};

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub point: [f64; 4],
    pub value: f64,
    pub gradient: [f64; 4],
    pub hessian: SymMat4,
}

impl Jet2 {
    pub fn grad_norm_sq(&self) -> f64 {
        dot4(self.gradient, self.gradient)
    }

    pub fn laplacian(&self) -> f64 {
        self.hessian.trace()
    }

    /// `div(|du|^2 du) = |du|^2 Lap u + 2 du^T D^2u du`
    pub fn div_flux(&self) -> f64 {
        let g = self.gradient;
        self.grad_norm_sq() * self.laplacian() + 2.0 * dot4(g, self.hessian.mul_vec(g))
    }

    /// The divergence-form vector field `W` with `sigma_2(A) = -div(W)/2`:
    /// `W_i = (-Lap u delta_ij + u_ij - rho |du|^2 delta_ij) u_j`.
    pub fn flux_w(&self, rho: f64) -> [f64; 4] {
        let hg = self.hessian.mul_vec(self.gradient);
        let c = -self.laplacian() - rho * self.grad_norm_sq();
        let mut w = [0.0; 4];
        for i in 0..4 {
            w[i] = c * self.gradient[i] + hg[i];
        }
        w
    }
}

/// Assembles `A(rho, u)` from a jet.
pub fn assemble_a(jet: &Jet2, rho: f64) -> SymMat4 {
    let g = jet.gradient;
    let half = 0.5 * rho * jet.grad_norm_sq();
    let mut a = jet.hessian.scale(-1.0).add(&SymMat4::outer(g).scale(rho));
    a = a.add_identity(-half);
    a
}

/// Residuals of the three scaling laws of `A`, each as a max-abs entry
/// difference:
/// `A(rho, u(a x) + b)(x/a) = a^2 A(rho, u)(x)`,
/// `A(-rho, -u) = -A(rho, u)`,
/// `A(rho, u) = A(1, rho u) / rho` (skipped when `rho = 0`).
pub fn scaling_check(jet: &Jet2, rho: f64, a: f64, b: f64) -> ScalingResiduals {
    let base = assemble_a(jet, rho);

    let dilated = Jet2 {
        point: jet.point.map(|x| x / a),
        value: jet.value + b,
        gradient: jet.gradient.map(|g| a * g),
        hessian: jet.hessian.scale(a * a),
    };
    let dilation = assemble_a(&dilated, rho).sub(&base.scale(a * a)).max_abs();

    let negated = Jet2 {
        point: jet.point,
        value: -jet.value,
        gradient: jet.gradient.map(|g| -g),
        hessian: jet.hessian.scale(-1.0),
    };
    let reflection = assemble_a(&negated, -rho).add(&base).max_abs();

    let normalization = if rho == 0.0 {
        0.0
    } else {
        let scaled = Jet2 {
            point: jet.point,
            value: rho * jet.value,
            gradient: jet.gradient.map(|g| rho * g),
            hessian: jet.hessian.scale(rho),
        };
        assemble_a(&scaled, 1.0).scale(1.0 / rho).sub(&base).max_abs()
    };
    ScalingResiduals { dilation, reflection, normalization }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResiduals {
    pub dilation: f64,
    pub reflection: f64,
    pub normalization: f64,
}

impl ScalingResiduals {
    pub fn max(&self) -> f64 {
        self.dilation.max(self.reflection).max(self.normalization)
    }
}

/// `|sigma_2(A) + div(W)/2|` at `x`, with the divergence of `W` expanded
/// analytically from third derivatives.
pub fn divergence_residual<F: AnalyticField + ?Sized>(field: &F, rho: f64, x: [f64; 4]) -> f64 {
    let jet = field.jet(x);
    let t = field.third(x);
    let g = jet.gradient;
    let h = jet.hessian;
    let lap = jet.laplacian();
    let g2 = jet.grad_norm_sq();
    let mut div_w = 0.0;
    for i in 0..4 {
        let dlap_i: f64 = (0..4).map(|k| t[k][k][i]).sum();
        let mut term = -dlap_i * g[i] - lap * h.get(i, i);
        for j in 0..4 {
            term += t[i][j][i] * g[j] + h.get(i, j) * h.get(j, i);
        }
        let dg2_i: f64 = (0..4).map(|k| 2.0 * g[k] * h.get(k, i)).sum();
        term -= rho * (dg2_i * g[i] + g2 * h.get(i, i));
        div_w += term;
    }
    let sigma2 = assemble_a(&jet, rho).sigma2();
    (sigma2 + 0.5 * div_w).abs()
}

/// Maximum over rows of `|div T1|` and `|div T2|` for the Newton tensors of
/// `D^2 u`, both of which vanish identically.
pub fn newton_divergence_residual<F: AnalyticField + ?Sized>(field: &F, x: [f64; 4]) -> f64 {
    let h = field.hessian(x);
    let t = field.third(x);
    let (t1, _) = crate::symm::newton_tensors(&h);
    let tr = h.trace();
    // d_j T1_kj
    let mut div_t1 = [0.0; 4];
    for (k, d) in div_t1.iter_mut().enumerate() {
        let mut s = 0.0;
        for l in 0..4 {
            s += -t[l][l][k] + t[k][l][l];
        }
        *d = s;
    }
    let mut worst = div_t1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..4 {
        // d_i sigma_2(H) = tr(H) d_i tr(H) - sum_kl H_kl d_i H_lk
        let dtr: f64 = (0..4).map(|k| t[k][k][i]).sum();
        let mut s = tr * dtr;
        for k in 0..4 {
            for l in 0..4 {
                s -= h.get(k, l) * t[l][k][i];
            }
        }
        // d_j (H_ik T1_kj) = (d_j H_ik) T1_kj + H_ik (div T1)_k
        for k in 0..4 {
            for j in 0..4 {
                s += t[i][k][j] * t1.get(k, j);
            }
            s += h.get(i, k) * div_t1[k];
        }
        worst = worst.max(s.abs());
    }
    worst
}
