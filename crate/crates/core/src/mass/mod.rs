//! Level-set quantities and the quasi-local mass
//! `M(t) = 2 N Q + (rho/8) Q^4 - 12 P` on `Omega_t = {u > t}`, where
//!
//! * `N = |S^3|^{-1} int_{Omega_t} sigma_2(A)`,
//! * `P = |S^3|^{-1} int_{Omega_t} (F(t) - F(u))`,
//! * `Q^3 = |S^3|^{-1} int_{Omega_t} div(|du|^2 du)`,
//! * `V = |S^3|^{-1} |Omega_t|`.
//!
//! Radial profiles use one-dimensional quadrature; grid fields use the cell
//! binning in [`binning`].

pub mod binning;

pub use binning::{level_set_binning, mass_scan_grid, BinningOptions, LevelAccum, LevelSetBinning};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::ForcingSpec;
use crate::quad;
use crate::radial::RadialProfile;
use crate::SPHERE_AREA;

/// Span in log-radius below `s(t)` integrated for `P`; `e^{-160}` is
/// negligible against every integrand here.
const LOWER_SPAN: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Npqv {
    pub n: f64,
    pub p: f64,
    pub q: f64,
    pub v: f64,
}

impl Npqv {
    pub fn mass(&self, rho: f64) -> f64 {
        mass_from_parts(rho, self.n, self.p, self.q)
    }
}

pub fn mass_from_parts(rho: f64, n: f64, p: f64, q: f64) -> f64 {
    2.0 * n * q + 0.125 * rho * q.powi(4) - 12.0 * p
}

/// `N = (3/2) v^2 + (rho/2) v^3`, the value of `N` on a round sphere where
/// `r u_r = v`; also the limit of `N` along levels where `v -> alpha`.
pub fn n_of_slope(rho: f64, v: f64) -> f64 {
    (1.5 + 0.5 * rho * v) * v * v
}

/// `N`, `P`, `Q`, `V` at level `t` of a radial profile, with `P` from the
/// profile's declared forcing.
pub fn npqv_radial(profile: &RadialProfile, t: f64) -> Result<Npqv> {
    npqv_radial_with(profile, &profile.forcing, t)
}

/// As [`npqv_radial`] with `P` built from `forcing` instead of the one the
/// profile was solved with (super-solution scans).
pub fn npqv_radial_with(profile: &RadialProfile, forcing: &ForcingSpec, t: f64) -> Result<Npqv> {
    let st = profile.s_of_level(t)?;
    let v = profile.eval(st)[1];
    let big_f = forcing.antiderivative();
    let ft = big_f.eval(t);
    let (p, _) = quad::integrate(
        |s| (ft - big_f.eval(profile.eval(s)[0])) * (4.0 * s).exp(),
        st - LOWER_SPAN,
        st,
        1e-15,
        1e-12,
    );
    Ok(Npqv { n: n_of_slope(profile.rho, v), p, q: v, v: 0.25 * (4.0 * st).exp() })
}

/// `(M, M_alt)` at level `t`. `M_alt` is the boundary-only form, which on a
/// sphere reduces to `(9 rho/8)(Q^4 - v^4) + 3 v^2 (Q - v)` with
/// `v = <x, du>`.
pub fn mass_radial(profile: &RadialProfile, t: f64) -> Result<(f64, f64)> {
    mass_radial_with(profile, &profile.forcing, t)
}

pub fn mass_radial_with(profile: &RadialProfile, forcing: &ForcingSpec, t: f64) -> Result<(f64, f64)> {
    let q = npqv_radial_with(profile, forcing, t)?;
    let v = profile.eval(profile.s_of_level(t)?)[1];
    Ok((q.mass(profile.rho), sphere_mass_alt(profile.rho, q.q, v)))
}

fn sphere_mass_alt(rho: f64, q: f64, v: f64) -> f64 {
    1.125 * rho * (q.powi(4) - v.powi(4)) + 3.0 * v * v * (q - v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanSource {
    Radial,
    Grid,
}

/// Quantities at a decreasing sequence of levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassScan {
    pub rho: f64,
    pub f_spec: ForcingSpec,
    pub source: ScanSource,
    pub t_grid: Vec<f64>,
    pub n: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub m: Vec<f64>,
    pub m_alt: Vec<f64>,
    /// Three-point `dM/dt` at interior levels.
    pub dm_estimate: Vec<Option<f64>>,
    /// Richardson estimate of the error in `M` (grid scans).
    pub m_error: Option<Vec<f64>>,
    /// `|L_t|^4 / (4^3 |S^3| |Omega_t|^3)`, at least 1 (grid scans).
    pub isoperimetric_ratio: Option<Vec<f64>>,
    pub grid: Option<GridScanInfo>,
}

/// Bookkeeping of a grid scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScanInfo {
    pub binning: BinningOptions,
    pub scanned_cells: usize,
    pub excluded_cells: usize,
    pub excluded_fraction: f64,
    /// Cells with `sigma_2(A) < (1 - slack) f(u)`.
    pub supersolution_violations: usize,
    /// `max (f - sigma_2) / f` over scanned cells.
    pub worst_supersolution_deficit: f64,
    pub t_ref: f64,
}

/// JSON sidecar for a scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanMeta {
    pub rho: f64,
    pub f_spec: ForcingSpec,
    pub source: ScanSource,
    pub levels: usize,
    pub max_abs_m: f64,
    pub max_abs_m_alt: f64,
    pub monotonicity_defect: f64,
    pub max_increase: f64,
    pub grid: Option<GridScanInfo>,
}

/// Decreasing levels from `t_hi` to `t_lo` inclusive.
pub fn level_grid(t_hi: f64, t_lo: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![t_hi];
    }
    (0..count).map(|i| t_hi + (t_lo - t_hi) * i as f64 / (count - 1) as f64).collect()
}

pub(crate) fn check_t_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Invalid("empty level grid".into()));
    }
    if t_grid.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Invalid("level grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// Three-point derivative on a non-uniform grid.
pub(crate) fn three_point(t: &[f64], y: &[f64]) -> Vec<Option<f64>> {
    (0..t.len())
        .map(|i| {
            if i == 0 || i + 1 == t.len() {
                return None;
            }
            let h1 = t[i] - t[i - 1];
            let h2 = t[i + 1] - t[i];
            Some(-h2 / (h1 * (h1 + h2)) * y[i - 1] + (h2 - h1) / (h1 * h2) * y[i] + h1 / (h2 * (h1 + h2)) * y[i + 1])
        })
        .collect()
}

/// Scan of a radial profile with its own forcing.
pub fn mass_scan_radial(profile: &RadialProfile, t_grid: &[f64]) -> Result<MassScan> {
    mass_scan_radial_with(profile, &profile.forcing, t_grid)
}

/// Scan with a declared forcing (a super-solution when it lies below the
/// forcing that was solved for).
pub fn mass_scan_radial_with(profile: &RadialProfile, forcing: &ForcingSpec, t_grid: &[f64]) -> Result<MassScan> {
    check_t_grid(t_grid)?;
    let rows: Vec<(Npqv, f64)> = t_grid
        .par_iter()
        .map(|&t| -> Result<(Npqv, f64)> {
            let q = npqv_radial_with(profile, forcing, t)?;
            let v = profile.eval(profile.s_of_level(t)?)[1];
            Ok((q, sphere_mass_alt(profile.rho, q.q, v)))
        })
        .collect::<Result<_>>()?;
    let rho = profile.rho;
    let m: Vec<f64> = rows.iter().map(|(q, _)| q.mass(rho)).collect();
    Ok(MassScan {
        rho,
        f_spec: forcing.clone(),
        source: ScanSource::Radial,
        t_grid: t_grid.to_vec(),
        n: rows.iter().map(|r| r.0.n).collect(),
        p: rows.iter().map(|r| r.0.p).collect(),
        q: rows.iter().map(|r| r.0.q).collect(),
        v: rows.iter().map(|r| r.0.v).collect(),
        dm_estimate: three_point(t_grid, &m),
        m,
        m_alt: rows.iter().map(|r| r.1).collect(),
        m_error: None,
        isoperimetric_ratio: None,
        grid: None,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl MassScan {
    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }

    /// CSV with header `t,N,P,Q,V,M,M_alt,dM`; `dM` is empty at the ends.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,N,P,Q,V,M,M_alt,dM\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
                self.t_grid[i],
                self.n[i],
                self.p[i],
                self.q[i],
                self.v[i],
                self.m[i],
                self.m_alt[i],
                fmt_opt(self.dm_estimate[i])
            ));
        }
        out
    }

    pub fn meta(&self) -> ScanMeta {
        ScanMeta {
            rho: self.rho,
            f_spec: self.f_spec.clone(),
            source: self.source,
            levels: self.len(),
            max_abs_m: self.max_abs_m(),
            max_abs_m_alt: self.m_alt.iter().fold(0.0f64, |a, x| a.max(x.abs())),
            monotonicity_defect: self.monotonicity_defect(),
            max_increase: self.max_increase(),
            grid: self.grid.clone(),
        }
    }

    pub fn max_abs_m(&self) -> f64 {
        self.m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    /// Largest drop of `M` as `t` increases: `max_i M(t_{i+1}) - M(t_i)`
    /// over the decreasing grid. Non-positive for a non-decreasing mass.
    pub fn monotonicity_defect(&self) -> f64 {
        self.m.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest rise of `M` between neighbouring levels as `t` increases.
    pub fn max_increase(&self) -> f64 {
        self.m.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `dM/dt` over interior levels.
    pub fn min_dm(&self) -> Option<f64> {
        self.dm_estimate.iter().flatten().cloned().reduce(f64::min)
    }

    /// Sign and monotonicity facts that hold for any super-solution:
    /// `Q < 0`; `V` and `N` non-increasing in `t`; `N >= 0`. Returns the
    /// failed checks.
    pub fn structural_violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(i) = self.q.iter().position(|&q| !(q < 0.0)) {
            out.push(format!("Q >= 0 at t={}", self.t_grid[i]));
        }
        if let Some(i) = (0..self.len().saturating_sub(1)).find(|&i| self.v[i] > self.v[i + 1] + tol) {
            out.push(format!("V increases with t near t={}", self.t_grid[i]));
        }
        if let Some(i) = (0..self.len().saturating_sub(1)).find(|&i| self.n[i] > self.n[i + 1] + tol) {
            out.push(format!("N increases with t near t={}", self.t_grid[i]));
        }
        if let Some(i) = self.n.iter().position(|&n| n < -tol) {
            out.push(format!("N < 0 at t={}", self.t_grid[i]));
        }
        out
    }
}

/// Gradient magnitudes on the unit sphere with area weights summing to 1
/// (averages are taken against the normalized measure).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub grad_norm: Vec<f64>,
    pub weight: Vec<f64>,
}

impl BoundaryData {
    pub fn constant(c: f64) -> Self {
        Self { grad_norm: vec![c], weight: vec![1.0] }
    }

    fn mean_pow(&self, k: i32) -> f64 {
        let total: f64 = self.weight.iter().sum();
        self.grad_norm.iter().zip(&self.weight).map(|(g, w)| w * g.powi(k)).sum::<f64>() / total
    }
}

/// `M(tau) = (9 rho/8)[Q^4 - avg|du|^4] + 3 Q [avg|du|^2 - Q^2]` on the
/// boundary sphere of a Dirichlet problem on the unit ball, with
/// `Q = -(avg|du|^3)^{1/3}`.
pub fn dirichlet_mass(data: &BoundaryData, rho: f64) -> f64 {
    let q = -data.mean_pow(3).cbrt();
    1.125 * rho * (q.powi(4) - data.mean_pow(4)) + 3.0 * q * (data.mean_pow(2) - q * q)
}

/// [`dirichlet_mass`] for the restriction of a profile to `B_R`, rescaled to
/// the unit ball (`|du| = -u_s(ln R)` on the unit sphere).
pub fn dirichlet_boundary_mass(profile: &RadialProfile, radius: f64, rho: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Invalid("radius must be positive".into()));
    }
    let v = profile.eval(radius.ln())[1];
    Ok(dirichlet_mass(&BoundaryData::constant(-v), rho))
}

/// `int_{R^4} K f(u) dx` split into the quadrature over the profile and the
/// tail beyond it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalIntegral {
    pub value: f64,
    pub body: f64,
    pub tail: f64,
    pub alpha: f64,
}

/// `|S^3| int K(e^s) f(u(s)) e^{4s} ds` over all `s`. Beyond the grid the
/// integrand decays like `e^{4(1 + alpha) s}`; the tail is integrated along
/// the linear continuation `u = u_end + alpha (s - s_end)`.
pub fn total_integral(profile: &RadialProfile) -> Result<TotalIntegral> {
    let alpha = profile.alpha.ok_or_else(|| {
        Error::InsufficientRange(format!("rho={} profile is not entire; the total integral is undefined", profile.rho))
    })?;
    if !(alpha < -1.0) {
        return Err(Error::InfiniteIntegral { alpha });
    }
    let body = total_integral_truncated(profile, profile.s_max());
    let (s_end, u_end) = (profile.s_max(), profile.u_min());
    let integrand = |s: f64| {
        let u = u_end + alpha * (s - s_end);
        profile.k.at_radius(s.exp()) * profile.forcing.f(u) * (4.0 * s).exp()
    };
    let decay = -4.0 * (1.0 + alpha);
    let span = 60.0 / decay;
    let (tail, _) = quad::integrate(integrand, s_end, s_end + span, 1e-300, 1e-13);
    let tail = SPHERE_AREA * tail;
    Ok(TotalIntegral { value: body + tail, body, tail, alpha })
}

/// `|S^3| int_{-inf}^{s_hi} K f(u) e^{4s} ds` without any tail.
pub fn total_integral_truncated(profile: &RadialProfile, s_hi: f64) -> f64 {
    let s_lo = profile.s_min() - LOWER_SPAN;
    let integrand = |s: f64| profile.k.at_radius(s.exp()) * profile.forcing.f(profile.eval(s)[0]) * (4.0 * s).exp();
    // Split at the grid start and at unit steps so the adaptive rule sees
    // the peak near s = 0.
    let mut cuts = vec![s_lo, profile.s_min()];
    let mut s = profile.s_min().ceil();
    while s < s_hi {
        cuts.push(s);
        s += 1.0;
    }
    cuts.push(s_hi);
    cuts.dedup();
    let mut acc = crate::sum::Neumaier::default();
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            acc.add(quad::integrate(integrand, w[0], w[1], 1e-300, 1e-13).0);
        }
    }
    SPHERE_AREA * acc.value()
}

/// `|S^3| ((3/2) alpha^2 + (rho/2) alpha^3)`, the limit of `|S^3| N(t)` as
/// `t -> -inf`.
pub fn total_integral_limit(rho: f64, alpha: f64) -> f64 {
    SPHERE_AREA * n_of_slope(rho, alpha)
}

/// `2 |S^3| / rho^2`, the value of [`total_integral_limit`] at the cone
/// boundary `alpha = -2/rho`.
pub fn total_integral_bound(rho: f64) -> f64 {
    2.0 * SPHERE_AREA / (rho * rho)
}
