use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symm::{dot4, norm4, SymMat3, SymMat4};

use super::Jet2;

/// `A` and `D^2 u` split along a level set through a regular point, in an
/// orthonormal frame `(e_1, e_2, e_3, nu)` with `nu = -du/|du|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDecomp {
    pub rho: f64,
    pub grad_norm: f64,
    pub nu: [f64; 4],
    pub tangent: [[f64; 4]; 3],
    /// Second fundamental form of the level set, `h_ab = -u_ab / |du|`.
    pub second_fundamental: SymMat3,
    pub mean_curvature: f64,
    /// `u_44 = D^2u(nu, nu)`
    pub u_nn: f64,
    /// `u_a4 = D^2u(e_a, nu)`
    pub mixed: [f64; 3],
    /// Tangential block of `A`: `h |du| - (rho/2)|du|^2 I`.
    pub a_tilde: SymMat3,
}

/// Decomposes at a point with `|du| >= grad_floor`. The tangent frame comes
/// from Gram-Schmidt on the three coordinate axes least aligned with `nu`,
/// ties broken by axis index.
pub fn frame_decompose(jet: &Jet2, rho: f64, grad_floor: f64) -> Result<FrameDecomp> {
    let (gn, nu) = normal(jet, grad_floor)?;
    let mut axes = [0usize, 1, 2, 3];
    axes.sort_by(|&a, &b| nu[a].abs().total_cmp(&nu[b].abs()));
    let mut tangent = [[0.0; 4]; 3];
    for (slot, &axis) in axes[..3].iter().enumerate() {
        let mut v = [0.0; 4];
        v[axis] = 1.0;
        let c = dot4(v, nu);
        for k in 0..4 {
            v[k] -= c * nu[k];
        }
        for prev in tangent.iter().take(slot) {
            let c = dot4(v, *prev);
            for k in 0..4 {
                v[k] -= c * prev[k];
            }
        }
        let n = norm4(v);
        tangent[slot] = v.map(|x| x / n);
    }
    Ok(build(jet, rho, gn, nu, tangent))
}

/// Same as [`frame_decompose`] with a caller-supplied orthonormal tangent
/// frame (checked to 1e-10).
pub fn frame_decompose_with_tangent(jet: &Jet2, rho: f64, grad_floor: f64, tangent: [[f64; 4]; 3]) -> Result<FrameDecomp> {
    let (gn, nu) = normal(jet, grad_floor)?;
    for (a, ea) in tangent.iter().enumerate() {
        if dot4(*ea, nu).abs() > 1e-10 {
            return Err(Error::Invalid("tangent frame is not orthogonal to the normal".into()));
        }
        for (b, eb) in tangent.iter().enumerate() {
            let want = if a == b { 1.0 } else { 0.0 };
            if (dot4(*ea, *eb) - want).abs() > 1e-10 {
                return Err(Error::Invalid("tangent frame is not orthonormal".into()));
            }
        }
    }
    Ok(build(jet, rho, gn, nu, tangent))
}

fn normal(jet: &Jet2, grad_floor: f64) -> Result<(f64, [f64; 4])> {
    let gn = norm4(jet.gradient);
    if !(gn >= grad_floor) || gn == 0.0 {
        return Err(Error::CriticalPoint { grad_norm: gn, floor: grad_floor });
    }
    Ok((gn, jet.gradient.map(|g| -g / gn)))
}

fn build(jet: &Jet2, rho: f64, gn: f64, nu: [f64; 4], tangent: [[f64; 4]; 3]) -> FrameDecomp {
    let cols = [tangent[0], tangent[1], tangent[2], nu];
    let u = jet.hessian.congruence(&cols);
    let mut h = SymMat3::zero();
    let mut a_tilde = SymMat3::zero();
    for a in 0..3 {
        for b in a..3 {
            let hab = -u.get(a, b) / gn;
            h.set(a, b, hab);
            let delta = if a == b { 1.0 } else { 0.0 };
            a_tilde.set(a, b, hab * gn - 0.5 * rho * gn * gn * delta);
        }
    }
    FrameDecomp {
        rho,
        grad_norm: gn,
        nu,
        tangent,
        second_fundamental: h,
        mean_curvature: h.trace(),
        u_nn: u.get(3, 3),
        mixed: [u.get(0, 3), u.get(1, 3), u.get(2, 3)],
        a_tilde,
    }
}

impl FrameDecomp {
    /// `A` expressed in the frame: tangential block `a_tilde`, mixed entries
    /// `-u_a4`, corner `-u_44 + (rho/2)|du|^2`.
    pub fn a_in_frame(&self) -> SymMat4 {
        let mut m = SymMat4::zero();
        for a in 0..3 {
            for b in a..3 {
                m.set(a, b, self.a_tilde.get(a, b));
            }
            m.set(a, 3, -self.mixed[a]);
        }
        m.set(3, 3, -self.u_nn + 0.5 * self.rho * self.grad_norm * self.grad_norm);
        m
    }

    /// Rotates [`Self::a_in_frame`] back to coordinates.
    pub fn reassemble(&self) -> SymMat4 {
        let f = self.a_in_frame();
        let cols = [self.tangent[0], self.tangent[1], self.tangent[2], self.nu];
        // A = E F E^T, i.e. congruence by the rows of E.
        let rows: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|k| cols[k][i]));
        f.congruence(&rows)
    }

    /// `Lap u = u_44 - H |du|`
    pub fn laplacian(&self) -> f64 {
        self.u_nn - self.mean_curvature * self.grad_norm
    }

    /// `div(|du|^2 du) = |du|^2 (3 u_44 - H |du|)`
    pub fn div_flux(&self) -> f64 {
        self.grad_norm.powi(2) * (3.0 * self.u_nn - self.mean_curvature * self.grad_norm)
    }

    /// `sigma_1(a_tilde) = H |du| - (3 rho / 2)|du|^2`
    pub fn sigma1_tangential(&self) -> f64 {
        self.mean_curvature * self.grad_norm - 1.5 * self.rho * self.grad_norm.powi(2)
    }
}
