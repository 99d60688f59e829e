//! Radial solutions in log-radius coordinates.
//!
//! With `s = ln|x|` and `v = u_s`, radial solutions of
//! `sigma_2(A) = K e^{4u} p(u)` satisfy
//! `3 u_ss v (1 + rho v / 2) = K e^{4(u+s)} p(u)`. For `p = 3/2`, `K = 1` the
//! equation has the first integral `v^2 q(v) = e^{4(u+s)} / 4` with
//! `q(x) = (rho/4) x^2 + ((2 + rho)/3) x + 1`, which reduces it to an
//! autonomous equation for `v` alone.

mod profile;
mod solve;

pub use profile::{ProfileMeta, RadialProfile};
pub use solve::{ode_residual, solve_radial, solve_radial_general, RadialOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `q(x) = (rho/4) x^2 + ((2 + rho)/3) x + 1`
pub fn slope_quadratic(rho: f64, x: f64) -> f64 {
    (0.25 * rho * x + (2.0 + rho) / 3.0) * x + 1.0
}

/// Real roots of `q` ordered so that `x1` is the one closer to `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootAnalysis {
    pub rho: f64,
    pub x0: f64,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    /// `rho^2 - 5 rho + 4`; `q` has real roots iff this is `>= 0`.
    pub discriminant: f64,
}

pub fn root_analysis(rho: f64) -> RootAnalysis {
    let discriminant = rho * rho - 5.0 * rho + 4.0;
    let (x1, x2) = if rho == 0.0 {
        (Some(-1.5), None)
    } else if discriminant < 0.0 {
        (None, None)
    } else {
        let a = 0.25 * rho;
        let b = (2.0 + rho) / 3.0;
        // b^2 - 4ac = discriminant / 9
        let qv = -0.5 * (b + (discriminant / 9.0).sqrt());
        (Some(1.0 / qv), Some(qv / a))
    };
    RootAnalysis { rho, x0: 0.0, x1, x2, discriminant }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 0.0) {
        return Err(Error::RhoOutOfScope { rho, reason: "negative rho reduces to the positive case by sign flips" });
    }
    if rho >= 2.0 {
        return Err(Error::Nonexistence { rho, reason: "no entire solution in the positive cone exists for rho >= 2" });
    }
    Ok(())
}

/// `lim_{s -> inf} u_s` for the entire radial solutions with `p = 3/2`.
///
/// For `rho in (1, 2)` the quadratic has no real root; `u_s` reaches `-2/rho`
/// at finite `s` and no entire radial solution exists.
pub fn asymptotic_slope(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    root_analysis(rho).x1.ok_or(Error::Nonexistence {
        rho,
        reason: "the slope quadratic has no real root for rho in (1, 2); radial solutions leave the cone at finite radius",
    })
}

/// Open interval of admissible gauges `epsilon` with `u_s(0) = -epsilon`.
pub fn admissible_gauge(rho: f64) -> Result<(f64, f64)> {
    check_rho(rho)?;
    Ok(match root_analysis(rho).x1 {
        Some(x1) => (0.0, -x1),
        None => (0.0, 2.0 / rho),
    })
}

/// Log-radius at which the solution with gauge `epsilon` reaches
/// `u_s = -2/rho` (the cone boundary). `None` when it never does.
pub fn existence_limit(rho: f64, epsilon: f64) -> Result<Option<f64>> {
    let (lo, hi) = admissible_gauge(rho)?;
    if !(epsilon > lo && epsilon < hi) {
        return Err(Error::InadmissibleGauge { rho, epsilon, lo, hi });
    }
    if root_analysis(rho).x1.is_some() {
        return Ok(None);
    }
    // ds = dv / v' with v' = 2 v q(v) / (1 + rho v / 2)
    let integrand = |x: f64| (1.0 + 0.5 * rho * x) / (2.0 * x * slope_quadratic(rho, x));
    let (val, _) = crate::quad::integrate(integrand, -epsilon, -2.0 / rho, 1e-14, 1e-13);
    Ok(Some(val))
}

/// `max |v^2 q(v) - e^{4(u+s)}/4|` over the grid.
pub fn first_integral_residual(profile: &RadialProfile) -> Result<f64> {
    if !profile.forcing.is_three_halves() || !profile.k.is_unit() {
        return Err(Error::UnsupportedForcing("the first integral exists only for f = (3/2) e^{4u} with K = 1"));
    }
    let rho = profile.rho;
    let mut worst = 0.0f64;
    for i in 0..profile.len() {
        let v = profile.u_s[i];
        let r = v * v * slope_quadratic(rho, v) - 0.25 * (4.0 * (profile.u[i] + profile.s[i])).exp();
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Largest undivided second difference `u_{i+1} - 2u_i + u_{i-1}`
/// (non-positive for concave `u(s)`).
pub fn concavity_check(profile: &RadialProfile) -> f64 {
    profile
        .u
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest decrease of `u(s) - alpha s` between consecutive grid points
/// (zero or negative when the gap is non-decreasing).
pub fn slope_gap_violation(profile: &RadialProfile, alpha: f64) -> f64 {
    let g: Vec<f64> = profile.s.iter().zip(&profile.u).map(|(s, u)| u - alpha * s).collect();
    g.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max)
}

/// Checks the pointwise cone conditions `u_s < 0`, `u_ss < 0`,
/// `u_s (1 + rho u_s / 2) < 0`; returns the first offending index.
pub fn cone_violation(profile: &RadialProfile) -> Option<usize> {
    (0..profile.len()).find(|&i| {
        let v = profile.u_s[i];
        !(v < 0.0 && profile.u_ss[i] < 0.0 && v * (1.0 + 0.5 * profile.rho * v) < 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_back_substitute() {
        for rho in [0.1, 0.5, 0.9, 1.0] {
            let r = root_analysis(rho);
            for x in [r.x1.unwrap(), r.x2.unwrap()] {
                assert!(slope_quadratic(rho, x).abs() < 1e-12, "rho={rho}");
            }
            if rho < 1.0 {
                let x1 = r.x1.unwrap();
                assert!(-1.0 > x1 && x1 > -2.0 / rho);
            }
        }
        assert_eq!(root_analysis(1.0).x1, Some(-2.0));
        assert!(root_analysis(1.5).x1.is_none());
    }

    #[test]
    fn slope_errors() {
        assert!(matches!(asymptotic_slope(2.5), Err(Error::Nonexistence { .. })));
        assert!(matches!(asymptotic_slope(2.0), Err(Error::Nonexistence { .. })));
        assert!(matches!(asymptotic_slope(-0.1), Err(Error::RhoOutOfScope { .. })));
        assert!(matches!(asymptotic_slope(1.5), Err(Error::Nonexistence { .. })));
        assert_eq!(asymptotic_slope(0.0).unwrap(), -1.5);
    }

    #[test]
    fn existence_limit_only_without_roots() {
        assert_eq!(existence_limit(0.5, 1.0).unwrap(), None);
        let sb = existence_limit(1.5, 0.3).unwrap().unwrap();
        assert!(sb > 0.5 && sb < 1.2, "{sb}");
        assert!(existence_limit(0.5, 1.6).is_err());
    }
}
