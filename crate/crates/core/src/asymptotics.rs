//! Behaviour at infinity: extremal radii `r_min(t) <= r_max(t)` of the level
//! sets, the slope `alpha = lim u / ln|x|`, and the blow-down family
//! `u_i(y) = u(r_min(t_i) y) - t_i`, which approaches `alpha ln|y|` on the
//! annulus `1/R <= |y| <= R`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField4, JET_MARGIN};
use crate::radial::RadialProfile;
use crate::symm::{dot4, norm4};

pub const DEFAULT_ANNULUS: f64 = 4.0;

/// Shells sampled across the annulus for the sup-norm distance.
const SHELLS: usize = 65;

/// Least decades of `r_min` a slope fit must span.
pub const FIT_DECADES: f64 = 4.0;

/// Level-set access shared by radial profiles and grid fields.
pub trait LevelData {
    /// `(min, max)` of `|x|` over `{u = t}`.
    fn extremal_radii(&self, t: f64) -> Result<(f64, f64)>;

    /// `sup |u(r y) - t - alpha ln|y||` over `1/annulus <= |y| <= annulus`.
    fn blowdown_sup_error(&self, t: f64, r: f64, alpha: f64, annulus: f64) -> Result<f64>;

    /// `sup |<x, du(x)> - alpha|` over `{u = t}`.
    fn gradient_alignment_error(&self, t: f64, alpha: f64) -> Result<f64>;

    /// Slope the blow-down is compared against when none is given.
    fn reference_slope(&self) -> Option<f64> {
        None
    }
}

fn profile_level(profile: &RadialProfile, t: f64) -> Result<f64> {
    if t >= profile.u_max() {
        return Err(Error::EmptyLevelSet { t });
    }
    profile.s_of_level(t)
}

impl LevelData for RadialProfile {
    fn extremal_radii(&self, t: f64) -> Result<(f64, f64)> {
        let r = profile_level(self, t)?.exp();
        Ok((r, r))
    }

    fn blowdown_sup_error(&self, t: f64, r: f64, alpha: f64, annulus: f64) -> Result<f64> {
        let (s0, span) = (r.ln(), annulus.ln());
        if s0 + span > self.s_max() {
            return Err(Error::InsufficientRange(format!(
                "annulus reaches s={} beyond the profile (s_max = {})",
                s0 + span,
                self.s_max()
            )));
        }
        Ok((0..SHELLS)
            .map(|j| {
                let sigma = span * (2.0 * j as f64 / (SHELLS - 1) as f64 - 1.0);
                (self.eval(s0 + sigma)[0] - t - alpha * sigma).abs()
            })
            .fold(0.0, f64::max))
    }

    fn gradient_alignment_error(&self, t: f64, alpha: f64) -> Result<f64> {
        let s = profile_level(self, t)?;
        Ok((self.eval(s)[1] - alpha).abs())
    }

    fn reference_slope(&self) -> Option<f64> {
        self.alpha
    }
}

/// The 48 unit vectors `+-e_k`, `(+-1, +-1, +-1, +-1)/2` and
/// `(+-e_j +- e_k)/sqrt(2)`.
pub fn sphere_directions() -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(48);
    for k in 0..4 {
        for sgn in [1.0, -1.0] {
            let mut d = [0.0; 4];
            d[k] = sgn;
            out.push(d);
        }
    }
    for bits in 0..16u32 {
        out.push(std::array::from_fn(|k| if bits >> k & 1 == 1 { -0.5 } else { 0.5 }));
    }
    let c = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..4 {
        for k in j + 1..4 {
            for (a, b) in [(c, c), (c, -c), (-c, c), (-c, -c)] {
                let mut d = [0.0; 4];
                d[j] = a;
                d[k] = b;
                out.push(d);
            }
        }
    }
    out
}

/// A point of `{u = t}` on a grid edge with the linearly interpolated value
/// of `<x, du>`.
#[derive(Clone, Copy, Debug)]
pub struct Crossing {
    pub point: [f64; 4],
    pub radial_derivative: f64,
}

fn nodal_gradient(field: &ScalarField4, idx: [usize; 4]) -> [f64; 4] {
    std::array::from_fn(|k| {
        let (mut p, mut m) = (idx, idx);
        p[k] += 1;
        m[k] -= 1;
        (field.at(p) - field.at(m)) / (2.0 * field.spacing[k])
    })
}

/// Crossings of `{u = t}` with grid edges. `{u >= t}` must stay
/// `JET_MARGIN` nodes away from every face.
pub fn level_crossings(field: &ScalarField4, t: f64) -> Result<Vec<Crossing>> {
    if t >= field.min_max().1 {
        return Err(Error::EmptyLevelSet { t });
    }
    let touches = (0..field.len())
        .into_par_iter()
        .any(|l| field.data[l] >= t && !field.is_interior(field.unravel(l), JET_MARGIN));
    if touches {
        return Err(Error::LevelTouchesBoundary { t });
    }
    let out: Vec<Crossing> = (0..field.len())
        .into_par_iter()
        .flat_map_iter(|l| {
            let idx = field.unravel(l);
            let a = field.data[l];
            let mut found = Vec::new();
            for k in 0..4 {
                if idx[k] + 1 >= field.extent[k] {
                    continue;
                }
                let mut j = idx;
                j[k] += 1;
                let b = field.at(j);
                if (a >= t) == (b >= t) {
                    continue;
                }
                let lam = (t - a) / (b - a);
                let (xa, xb) = (field.point(idx), field.point(j));
                let point: [f64; 4] = std::array::from_fn(|m| xa[m] + lam * (xb[m] - xa[m]));
                let da = dot4(xa, nodal_gradient(field, idx));
                let db = dot4(xb, nodal_gradient(field, j));
                found.push(Crossing { point, radial_derivative: da + lam * (db - da) });
            }
            found
        })
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyLevelSet { t });
    }
    Ok(out)
}

impl LevelData for ScalarField4 {
    fn extremal_radii(&self, t: f64) -> Result<(f64, f64)> {
        let c = level_crossings(self, t)?;
        Ok(c.iter().map(|c| norm4(c.point)).fold((f64::INFINITY, 0.0), |(lo, hi), r| (lo.min(r), hi.max(r))))
    }

    fn blowdown_sup_error(&self, t: f64, r: f64, alpha: f64, annulus: f64) -> Result<f64> {
        let dirs = sphere_directions();
        let span = annulus.ln();
        let mut worst = 0.0f64;
        for j in 0..SHELLS {
            let sigma = span * (2.0 * j as f64 / (SHELLS - 1) as f64 - 1.0);
            let rho_y = r * sigma.exp();
            for d in &dirs {
                let x = d.map(|c| c * rho_y);
                let u = self.interpolate(x).ok_or_else(|| {
                    Error::InsufficientRange(format!("rescaled annulus at |x|={rho_y} leaves the grid"))
                })?;
                worst = worst.max((u - t - alpha * sigma).abs());
            }
        }
        Ok(worst)
    }

    fn gradient_alignment_error(&self, t: f64, alpha: f64) -> Result<f64> {
        Ok(level_crossings(self, t)?.iter().map(|c| (c.radial_derivative - alpha).abs()).fold(0.0, f64::max))
    }
}

pub fn extremal_radii<D: LevelData + ?Sized>(data: &D, t: f64) -> Result<(f64, f64)> {
    data.extremal_radii(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    /// Points used (the deepest half).
    pub points: usize,
    /// `log10(r_min(t_last) / r_min(t_first))` over the whole sequence.
    pub decades: f64,
}

/// Least-squares slope of `t = u_(r_min(t))` against `ln r_min(t)` over the
/// deepest half of a decreasing level sequence.
pub fn alpha_fit<D: LevelData + Sync + ?Sized>(data: &D, t_sequence: &[f64]) -> Result<AlphaFit> {
    crate::mass::check_t_grid(t_sequence)?;
    if t_sequence.len() < 4 {
        return Err(Error::InsufficientRange("a slope fit needs at least four levels".into()));
    }
    let radii: Vec<f64> = t_sequence.par_iter().map(|&t| data.extremal_radii(t).map(|r| r.0)).collect::<Result<_>>()?;
    let decades = (radii[radii.len() - 1] / radii[0]).log10();
    if !(decades >= FIT_DECADES) {
        return Err(Error::InsufficientRange(format!(
            "levels span {decades:.2} decades of radius; a slope fit needs {FIT_DECADES}"
        )));
    }
    let start = t_sequence.len() / 2;
    let xs: Vec<f64> = radii[start..].iter().map(|r| r.ln()).collect();
    let ys = &t_sequence[start..];
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha = sxy / sxx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - alpha * (x - mx)).powi(2)).sum();
    Ok(AlphaFit { alpha, residual: (ss / n).sqrt(), points: xs.len(), decades })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowdownOptions {
    /// `R` in the annulus `1/R <= |y| <= R`.
    pub annulus: f64,
    /// Limit slope; `None` takes the data's own (profiles) or the fitted one.
    pub alpha: Option<f64>,
}

impl Default for BlowdownOptions {
    fn default() -> Self {
        Self { annulus: DEFAULT_ANNULUS, alpha: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowdownReport {
    pub t_sequence: Vec<f64>,
    pub r_min: Vec<f64>,
    pub r_max: Vec<f64>,
    /// Slope the rescaled functions are compared against.
    pub alpha: f64,
    /// `None` when the levels span too few decades for a fit.
    pub alpha_fit: Option<f64>,
    pub ratio_max: f64,
    /// `sup |u_i - alpha ln|y||` on the annulus.
    pub sup_error: Vec<f64>,
    /// `sup | |y| - 1 |` over the level set rescaled by `r_min`.
    pub sup_log_radius_error: Vec<f64>,
    /// `sup |<y, du_i(y)> - alpha|` over the rescaled level set.
    pub gradient_alignment_error: Vec<f64>,
    pub annulus: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlowdownSummary {
    pub alpha_fit: Option<f64>,
    pub ratio_max: f64,
    pub alpha: f64,
    pub annulus: f64,
    pub levels: usize,
}

struct LevelRow {
    r_min: f64,
    r_max: f64,
    sup: f64,
    grad: f64,
}

/// Blow-down diagnostics along a decreasing level sequence. A level set
/// with `r_max / r_min > R` does not fit the annulus and is reported as
/// [`Error::RatioBound`].
pub fn blowdown_convergence<D: LevelData + Sync + ?Sized>(
    data: &D,
    t_sequence: &[f64],
    opts: &BlowdownOptions,
) -> Result<BlowdownReport> {
    crate::mass::check_t_grid(t_sequence)?;
    if !(opts.annulus > 1.0) {
        return Err(Error::Invalid(format!("annulus R must exceed 1, got {}", opts.annulus)));
    }
    let fit = alpha_fit(data, t_sequence).ok().map(|f| f.alpha);
    let alpha = opts.alpha.or_else(|| data.reference_slope()).or(fit).ok_or_else(|| {
        Error::InsufficientRange("no limit slope given and the levels are too shallow to fit one".into())
    })?;
    let rows: Vec<LevelRow> = t_sequence
        .par_iter()
        .map(|&t| -> Result<LevelRow> {
            let (r_min, r_max) = data.extremal_radii(t)?;
            let ratio = r_max / r_min;
            if ratio > opts.annulus {
                return Err(Error::RatioBound { t, ratio, bound: opts.annulus });
            }
            Ok(LevelRow {
                r_min,
                r_max,
                sup: data.blowdown_sup_error(t, r_min, alpha, opts.annulus)?,
                grad: data.gradient_alignment_error(t, alpha)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BlowdownReport {
        t_sequence: t_sequence.to_vec(),
        r_min: rows.iter().map(|r| r.r_min).collect(),
        r_max: rows.iter().map(|r| r.r_max).collect(),
        alpha,
        alpha_fit: fit,
        ratio_max: rows.iter().map(|r| r.r_max / r.r_min).fold(1.0, f64::max),
        sup_error: rows.iter().map(|r| r.sup).collect(),
        sup_log_radius_error: rows.iter().map(|r| r.r_max / r.r_min - 1.0).collect(),
        gradient_alignment_error: rows.iter().map(|r| r.grad).collect(),
        annulus: opts.annulus,
    })
}

fn non_increasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + tol)
}

impl BlowdownReport {
    /// CSV with header `t,r_min,r_max,sup_err,grad_err`; `sup_err` is the
    /// sup-norm distance on the annulus.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r_min,r_max,sup_err,grad_err\n");
        for i in 0..self.t_sequence.len() {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?}\n",
                self.t_sequence[i], self.r_min[i], self.r_max[i], self.sup_error[i], self.gradient_alignment_error[i]
            ));
        }
        out
    }

    pub fn summary(&self) -> BlowdownSummary {
        BlowdownSummary {
            alpha_fit: self.alpha_fit,
            ratio_max: self.ratio_max,
            alpha: self.alpha,
            annulus: self.annulus,
            levels: self.t_sequence.len(),
        }
    }

    /// All three error sequences non-increasing up to `tol`.
    pub fn errors_non_increasing(&self, tol: f64) -> bool {
        non_increasing(&self.sup_error, tol)
            && non_increasing(&self.sup_log_radius_error, tol)
            && non_increasing(&self.gradient_alignment_error, tol)
    }

    /// `r_min` and `r_max` grow as `t` decreases, and `r_min <= r_max`.
    pub fn radii_consistent(&self) -> bool {
        let ordered = self.r_min.iter().zip(&self.r_max).all(|(a, b)| a <= b);
        ordered && self.r_min.windows(2).all(|w| w[1] >= w[0]) && self.r_max.windows(2).all(|w| w[1] >= w[0])
    }

    /// No blow-up trend in `r_max / r_min`: the maximum over the last
    /// quarter of levels is at most `1.1` times that over the first.
    pub fn ratio_trend_bounded(&self) -> bool {
        let n = self.t_sequence.len();
        let q = (n / 4).max(1);
        let ratio = |i: usize| self.r_max[i] / self.r_min[i];
        let first = (0..q).map(ratio).fold(1.0, f64::max);
        let last = (n - q..n).map(ratio).fold(1.0, f64::max);
        last <= 1.1 * first
    }
}

/// `(min, max)` of `u` over the sphere `|x| = r`, sampled along
/// [`sphere_directions`] by multilinear interpolation.
pub fn sphere_envelopes(field: &ScalarField4, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let dirs = sphere_directions();
    radii
        .iter()
        .map(|&r| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for d in &dirs {
                let u = field
                    .interpolate(d.map(|c| c * r))
                    .ok_or_else(|| Error::InsufficientRange(format!("sphere of radius {r} leaves the grid")))?;
                lo = lo.min(u);
                hi = hi.max(u);
            }
            Ok((lo, hi))
        })
        .collect()
}

/// Largest increase of the chord slope of `lower` against `ln r`; at most
/// zero (up to discretization) when `lower(e^s)` is concave in `s`.
pub fn concavity_defect(radii: &[f64], lower: &[f64]) -> f64 {
    let slopes: Vec<f64> = radii.windows(2).zip(lower.windows(2)).map(|(r, u)| (u[1] - u[0]) / (r[1] / r[0]).ln()).collect();
    slopes.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_unit_and_distinct() {
        let d = sphere_directions();
        assert_eq!(d.len(), 48);
        for (i, a) in d.iter().enumerate() {
            assert!((norm4(*a) - 1.0).abs() < 1e-15);
            for b in &d[i + 1..] {
                assert!(dot4(*a, *b) < 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn concavity_defect_signs() {
        let r: Vec<f64> = (0..6).map(|k| (0.5 * k as f64).exp()).collect();
        let concave: Vec<f64> = r.iter().map(|x: &f64| -x.ln().powi(2)).collect();
        let convex: Vec<f64> = r.iter().map(|x: &f64| x.ln().powi(2)).collect();
        assert!(concavity_defect(&r, &concave) < 0.0);
        assert!(concavity_defect(&r, &convex) > 0.0);
    }
}
