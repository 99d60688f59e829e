//! The Pohozaev identity for `sigma_2(A) = K f(u)` on a domain `Omega` with
//! `u = tau` on the boundary and `F(tau) = 0`:
//!
//! `int_Omega 8 (K + <x, dK>/4) F(u) = int_{dOmega} (-(3/4) rho |du|^4 + (2/3) H |du|^3) <x, nu>`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{assemble_a, frame_decompose, ScalarField4, JET_MARGIN};
use crate::forcing::{ForcingSpec, KSpec};
use crate::mass::binning::kernel;
use crate::mass::npqv_radial_with;
use crate::quad;
use crate::radial::RadialProfile;
use crate::sum::Neumaier;
use crate::symm::dot4;
use crate::SPHERE_AREA;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Ball { radius: f64 },
    /// `{u > t}` averaged over `t` against the kernel of half-width `w`.
    SublevelAveraged { t: f64, kernel_half_width: f64, extent: [usize; 4], spacing: [f64; 4] },
}

/// The antiderivative is shifted so that `F(tau) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub tau: f64,
    /// Value of the unshifted `F` (zero at `-inf`) at `tau`.
    pub f_at_tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_residual: f64,
    pub rel_residual: f64,
    pub domain: Domain,
    #[serde(rename = "K_spec")]
    pub k_spec: KSpec,
    pub anchor: Anchor,
}

impl PohozaevReport {
    fn new(lhs: f64, rhs: f64, domain: Domain, k_spec: KSpec, anchor: Anchor) -> Self {
        let abs_residual = (lhs - rhs).abs();
        let rel_residual = abs_residual / lhs.abs().max(rhs.abs()).max(1e-300);
        Self { lhs, rhs, abs_residual, rel_residual, domain, k_spec, anchor }
    }
}

/// Boundary side on a sphere where `r u_r = v`:
/// `|S^3| (-(3/4) rho v^4 - 2 v^3)`.
pub fn sphere_boundary_term(rho: f64, v: f64) -> f64 {
    SPHERE_AREA * (-0.75 * rho * v.powi(4) - 2.0 * v.powi(3))
}

fn integrate_split(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mut cuts = vec![a];
    let mut s = a.floor() + 1.0;
    while s < b {
        cuts.push(s);
        s += 1.0;
    }
    cuts.push(b);
    let mut acc = Neumaier::default();
    for w in cuts.windows(2) {
        acc.add(quad::integrate(&f, w[0], w[1], 1e-300, 1e-13).0);
    }
    acc.value()
}

/// The identity on the ball `B_R` for a radial profile: the volume side by
/// quadrature in `s = ln r`, the boundary side in closed form.
pub fn pohozaev_radial(profile: &RadialProfile, radius: f64, k: &KSpec) -> Result<PohozaevReport> {
    k.validate()?;
    if !(radius > 0.0) {
        return Err(Error::Invalid("radius must be positive".into()));
    }
    let s_r = radius.ln();
    if s_r > profile.s_max() {
        return Err(Error::InsufficientRange(format!(
            "radius {radius} lies beyond the profile (s_max = {})",
            profile.s_max()
        )));
    }
    let [tau, v, _] = profile.eval(s_r);
    let big_f = profile.forcing.antiderivative();
    let f_tau = big_f.eval(tau);
    let integrand = |s: f64| {
        let r = s.exp();
        let weight = k.at_radius(r) + 0.25 * k.radial_derivative_times_r(r);
        8.0 * weight * (big_f.eval(profile.eval(s)[0]) - f_tau) * (4.0 * s).exp()
    };
    let lhs = SPHERE_AREA * integrate_split(integrand, s_r.min(profile.s_min()) - 40.0, s_r);
    let rhs = sphere_boundary_term(profile.rho, v);
    Ok(PohozaevReport::new(lhs, rhs, Domain::Ball { radius }, *k, Anchor { tau, f_at_tau: f_tau }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevGridOptions {
    /// Half-width in `t` of the averaging kernel; `None` uses half the
    /// distance from `t` to `max u`.
    pub kernel_half_width: Option<f64>,
    /// Largest accepted `|sigma_2(A) - K f(u)| / (K f(u))` on the
    /// integration region.
    pub solution_tolerance: f64,
}

impl Default for PohozaevGridOptions {
    fn default() -> Self {
        Self { kernel_half_width: None, solution_tolerance: 0.1 }
    }
}

/// `W(u) = int psi(tau - t) (F(u) - F(tau))_+ dtau` for the kernel `psi` of
/// half-width `w`, with `F` shifted to vanish at `t`.
struct AveragedPotential<'a> {
    f: &'a (dyn Fn(f64) -> f64 + Sync),
    t: f64,
    w: f64,
    /// `int psi(tau - t) F(tau) dtau`
    mean_f: f64,
}

impl AveragedPotential<'_> {
    fn eval(&self, u: f64) -> f64 {
        let (lo, hi) = (self.t - self.w, self.t + self.w);
        if u <= lo {
            return 0.0;
        }
        if u >= hi {
            return (self.f)(u) - self.mean_f;
        }
        let fu = (self.f)(u);
        quad::integrate(|tau| kernel(tau - self.t, self.w) * (fu - (self.f)(tau)), lo, u, 1e-300, 1e-13).0
    }
}

/// The identity on sublevel sets of a grid field, averaged over levels:
/// multiplying by `psi(tau - t)` and integrating in `tau` turns the
/// boundary side into `int g |du| psi(u - t) dx` (co-area) and the volume
/// side into `int 8 (K + <x, dK>/4) W(u) dx`. Both are cell sums of smooth
/// integrands. Refuses fields that do not solve the equation on the region.
pub fn pohozaev_grid(
    field: &ScalarField4,
    rho: f64,
    f_spec: &ForcingSpec,
    t: f64,
    k: &KSpec,
    opts: &PohozaevGridOptions,
) -> Result<PohozaevReport> {
    k.validate()?;
    let u_max = field.min_max().1;
    if !(t < u_max) {
        return Err(Error::EmptyLevelSet { t });
    }
    let w = match opts.kernel_half_width {
        Some(w) if w > 0.0 && w.is_finite() => w,
        Some(w) => return Err(Error::Invalid(format!("kernel half-width must be positive, got {w}"))),
        None => 0.5 * (u_max - t),
    };
    let lo = t - w;
    let ring_max = (0..field.len())
        .into_par_iter()
        .filter(|&l| !field.is_interior(field.unravel(l), JET_MARGIN))
        .map(|l| field.data[l] + field.local_reach(field.unravel(l)))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    if ring_max >= lo {
        return Err(Error::LevelTouchesBoundary { t: lo });
    }
    let big_f = f_spec.antiderivative();
    let f_t = big_f.eval(t);
    let shifted = |u: f64| big_f.eval(u) - f_t;
    let mean_f = quad::integrate(|tau| kernel(tau - t, w) * shifted(tau), lo, t + w, 1e-300, 1e-13).0;
    let pot = AveragedPotential { f: &shifted, t, w, mean_f };
    let grad_floor = field.gradient_floor();
    let slab: usize = field.extent[1..].iter().product();

    struct Part {
        lhs: Neumaier,
        rhs: Neumaier,
        residual: f64,
    }
    let run = |i0: usize| -> Part {
        let mut p = Part { lhs: Neumaier::default(), rhs: Neumaier::default(), residual: 0.0 };
        for l in i0 * slab..(i0 + 1) * slab {
            let idx = field.unravel(l);
            if !field.is_interior(idx, JET_MARGIN) || field.data[l] <= lo {
                continue;
            }
            let jet = field.jet_unchecked(idx, 1);
            let x = jet.point;
            let kf = k.at(x) * f_spec.f(jet.value);
            let s2 = assemble_a(&jet, rho).sigma2();
            p.residual = p.residual.max((s2 - kf).abs() / kf.abs());
            p.lhs.add(8.0 * (k.at(x) + 0.25 * k.x_dot_grad(x)) * pot.eval(jet.value));
            let psi = kernel(jet.value - t, w);
            if psi > 0.0 {
                if let Ok(fd) = frame_decompose(&jet, rho, grad_floor) {
                    let gn = fd.grad_norm;
                    let x_nu = -dot4(x, jet.gradient) / gn;
                    let g = (-0.75 * rho * gn.powi(4) + 2.0 / 3.0 * fd.mean_curvature * gn.powi(3)) * x_nu;
                    p.rhs.add(g * gn * psi);
                }
            }
        }
        p
    };
    let parts: Vec<Part> = (0..field.extent[0]).into_par_iter().map(run).collect();
    let mut lhs = Neumaier::default();
    let mut rhs = Neumaier::default();
    let mut residual = 0.0f64;
    for p in &parts {
        lhs.merge(&p.lhs);
        rhs.merge(&p.rhs);
        residual = residual.max(p.residual);
    }
    if !(residual <= opts.solution_tolerance) {
        return Err(Error::NotASolution { residual, tolerance: opts.solution_tolerance });
    }
    let dv = field.cell_volume();
    let domain = Domain::SublevelAveraged { t, kernel_half_width: w, extent: field.extent, spacing: field.spacing };
    Ok(PohozaevReport::new(lhs.value() * dv, rhs.value() * dv, domain, *k, Anchor { tau: t, f_at_tau: f_t }))
}

/// `|P_vol - P_bdry|` at level `t` of a radial profile, where `P_vol` is the
/// quadrature value of `P(t)` and `P_bdry = -(8 |S^3|)^{-1}` times the
/// boundary side of the identity on `Omega_t`. Zero for solutions.
pub fn mass_pohozaev_consistency(profile: &RadialProfile, t: f64) -> Result<f64> {
    mass_pohozaev_consistency_with(profile, &profile.forcing, t)
}

/// As [`mass_pohozaev_consistency`] with `P_vol` built from `forcing`; for
/// a super-solution the mismatch is returned as is.
pub fn mass_pohozaev_consistency_with(profile: &RadialProfile, forcing: &ForcingSpec, t: f64) -> Result<f64> {
    let q = npqv_radial_with(profile, forcing, t)?;
    let v = profile.eval(profile.s_of_level(t)?)[1];
    let p_bdry = -sphere_boundary_term(profile.rho, v) / (8.0 * SPHERE_AREA);
    Ok((q.p - p_bdry).abs())
}

/// Grid counterpart of [`mass_pohozaev_consistency`] on level-averaged
/// sublevel sets with `K = 1`: `|lhs - rhs| / (8 |S^3|)`.
pub fn mass_pohozaev_consistency_grid(
    field: &ScalarField4,
    rho: f64,
    f_spec: &ForcingSpec,
    t: f64,
    opts: &PohozaevGridOptions,
) -> Result<f64> {
    let r = pohozaev_grid(field, rho, f_spec, t, &KSpec::default(), opts)?;
    Ok(r.abs_residual / (8.0 * SPHERE_AREA))
}
