//! Co-area binning of grid fields.
//!
//! Volume integrals over `Omega_t` weight each cell by the fraction of it
//! lying above `t`, computed exactly for the cell's linearization of `u`
//! (with the `h^2 Lap u / 24` shift from cell to node average). Surface
//! integrals follow the co-area formula
//! `int_{L_t} phi = -d/dt int_{Omega_t} phi |du|`, with the `t`-derivative
//! of each cell fraction taken in closed form.
//!
//! [`kernel`] is a compact smooth weight in `t` for level-averaged
//! identities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{assemble_a, frame_decompose, Jet2, ScalarField4, JET_MARGIN};
use crate::forcing::ForcingSpec;
use crate::sum::Neumaier;
use crate::symm::{cone_status, dot4, norm4};
use crate::SPHERE_AREA;

use super::{check_t_grid, mass_from_parts, three_point, GridScanInfo, MassScan, ScanSource};

/// Exponent of the kernel `(1 - y^2)^k`.
pub const KERNEL_POWER: i32 = 8;
/// Directions whose cell width is below this fraction of the widest are
/// treated as flat in [`cube_fraction_below`].
const FLAT_DIRECTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningOptions {
    /// Also bin with stride-2 jets and report `|M_h - M_2h| / 3`.
    pub richardson: bool,
    /// Relative slack in the super-solution test `sigma_2(A) >= f(u)`.
    pub supersolution_slack: f64,
}

impl Default for BinningOptions {
    fn default() -> Self {
        Self { richardson: true, supersolution_slack: 1e-2 }
    }
}

fn kernel_norm() -> f64 {
    // int_{-1}^{1} (1 - y^2)^k dy = 2^{2k+1} (k!)^2 / (2k+1)!
    let k = KERNEL_POWER as u32;
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    2f64.powi(2 * k as i32 + 1) * fact(k).powi(2) / fact(2 * k + 1)
}

/// Unit-mass kernel `c (1 - (x/w)^2)^k / w` supported on `|x| < w`.
pub fn kernel(x: f64, w: f64) -> f64 {
    let y = x / w;
    if y.abs() >= 1.0 {
        return 0.0;
    }
    (1.0 - y * y).powi(KERNEL_POWER) / (kernel_norm() * w)
}

/// Fraction of the cube `[-1/2, 1/2]^4` where `sum a_i y_i < d`.
pub fn cube_fraction_below(d: f64, a: [f64; 4]) -> f64 {
    box_spline(d, a, 0).clamp(0.0, 1.0)
}

/// `d/dd` of [`cube_fraction_below`]: the density of `sum a_i y_i` at `d`.
pub fn cube_fraction_density(d: f64, a: [f64; 4]) -> f64 {
    box_spline(d, a, 1).max(0.0)
}

/// Inclusion-exclusion formula for the distribution (`order = 0`) or the
/// density (`order = 1`) of `a.y`, `y` uniform on the centred unit cube.
fn box_spline(d: f64, a: [f64; 4], order: i32) -> f64 {
    let mut a = a.map(f64::abs);
    a.sort_by(f64::total_cmp);
    let half_sum = 0.5 * a.iter().sum::<f64>();
    if d >= half_sum || d <= -half_sum {
        return if order == 0 && d >= half_sum { 1.0 } else { 0.0 };
    }
    let amax = a[3];
    let active: Vec<f64> = a.iter().cloned().filter(|&x| x > FLAT_DIRECTION * amax).collect();
    let k = active.len() as i32;
    let x = d + 0.5 * active.iter().sum::<f64>();
    let mut total = 0.0;
    for mask in 0..(1usize << k) {
        let mut shift = 0.0;
        for (j, aj) in active.iter().enumerate() {
            if mask >> j & 1 == 1 {
                shift += aj;
            }
        }
        let z = x - shift;
        if z > 0.0 {
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * z.powi(k - order);
        }
    }
    let fact: f64 = (1..=(k - order)).map(f64::from).product();
    let prod: f64 = active.iter().product();
    total / (fact * prod)
}

fn cell_linearization(jet: &Jet2, spacing: [f64; 4]) -> (f64, [f64; 4]) {
    let shift: f64 = (0..4).map(|i| spacing[i] * spacing[i] * jet.hessian.get(i, i)).sum::<f64>() / 24.0;
    (jet.value + shift, std::array::from_fn(|i| jet.gradient[i] * spacing[i]))
}

/// Fraction of the cell around a node where `u > t`, using the node's jet.
pub fn cell_fraction_above(jet: &Jet2, spacing: [f64; 4], t: f64) -> f64 {
    let (u, a) = cell_linearization(jet, spacing);
    1.0 - cube_fraction_below(t - u, a)
}

/// `-d/dt` of [`cell_fraction_above`]; times `|du|` and the cell volume it
/// is the area of the linearized level set inside the cell.
pub fn cell_level_density(jet: &Jet2, spacing: [f64; 4], t: f64) -> f64 {
    let (u, a) = cell_linearization(jet, spacing);
    cube_fraction_density(t - u, a)
}

/// Accumulated integrals at one level, normalized by `|S^3|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelAccum {
    pub t: f64,
    pub volume: f64,
    pub sigma2: f64,
    pub div_flux: f64,
    /// `int (F(t) - F(u))`
    pub potential: f64,
    /// `int_{L_t} 1`
    pub area: f64,
    /// `int_{L_t} |du|^3 <x, du>`
    pub surf_grad_radial: f64,
    /// `int_{L_t} H |du|^2`
    pub surf_curv: f64,
    /// `int_{L_t} H |du|^2 <x, du>`
    pub surf_curv_radial: f64,
    /// `(volume, sigma2, div_flux, potential)` from stride-2 jets.
    pub coarse: Option<[f64; 4]>,
    /// Cells cut by the level set.
    pub cut_cells: usize,
}

/// Output of [`level_set_binning`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetBinning {
    pub rho: f64,
    pub f_spec: ForcingSpec,
    pub options: BinningOptions,
    pub levels: Vec<LevelAccum>,
    /// Nodes visited (inside `Omega_{t_min}` up to a cell).
    pub scanned_cells: usize,
    /// Near-critical nodes left out of every sum.
    pub excluded_cells: usize,
    pub supersolution_violations: usize,
    pub worst_supersolution_deficit: f64,
    pub t_ref: f64,
}

#[derive(Clone, Default)]
struct RawLevel {
    vol: [Neumaier; 4],
    coarse: [Neumaier; 4],
    surf: [Neumaier; 4],
    cut: usize,
}

#[derive(Clone)]
struct Chunk {
    levels: Vec<RawLevel>,
    scanned: usize,
    excluded: usize,
    super_bad: usize,
    worst_deficit: f64,
    cone_bad: usize,
    first_cone: Option<[usize; 4]>,
}

fn vol_terms(jet: &Jet2, rho: f64, spacing: [f64; 4], t: f64, ft: f64, big_f_u: f64) -> Option<([f64; 4], bool)> {
    let frac = cell_fraction_above(jet, spacing, t);
    if frac <= 0.0 {
        return None;
    }
    let s2 = assemble_a(jet, rho).sigma2();
    Some(([frac, frac * s2, frac * jet.div_flux(), frac * (ft - big_f_u)], frac < 1.0))
}

/// Bins a grid field at the levels `t_grid` (strictly decreasing).
///
/// Every node with `u` above `t_min` (less the reach of one cell) is
/// checked first: `A` must lie in `Gamma_2^+` there, otherwise the scan
/// fails with the offending indices. Nodes where `sigma_2(A) < f(u)` are
/// counted, not rejected. Levels whose cut cells reach the margin
/// needed for the stencils fail with [`Error::LevelTouchesBoundary`].
pub fn level_set_binning(
    field: &ScalarField4,
    rho: f64,
    f_spec: &ForcingSpec,
    t_grid: &[f64],
    opts: &BinningOptions,
) -> Result<LevelSetBinning> {
    check_t_grid(t_grid)?;
    let stride = if opts.richardson { 2 } else { 1 };
    let margin = JET_MARGIN * stride;
    let h = field.spacing;
    let gmax = field.max_difference_slope();
    let reach: f64 = 0.75 * h.iter().map(|hi| hi * gmax).sum::<f64>();
    let t_min = *t_grid.last().unwrap();
    let floor_u = t_min - reach;
    // Highest value a margin cell can reach, from its own differences.
    let ring_max = (0..field.len())
        .into_par_iter()
        .filter(|&l| !field.is_interior(field.unravel(l), margin))
        .map(|l| field.data[l] + field.local_reach(field.unravel(l)))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    if let Some(&t) = t_grid.iter().find(|&&t| ring_max >= t) {
        return Err(Error::LevelTouchesBoundary { t });
    }
    let grad_floor = field.gradient_floor();
    let big_f = f_spec.antiderivative();
    let ft: Vec<f64> = t_grid.iter().map(|&t| big_f.eval(t)).collect();
    let slab: usize = field.extent[1..].iter().product();

    let run_chunk = |i0: usize| -> Chunk {
        let mut c = Chunk {
            levels: vec![RawLevel::default(); t_grid.len()],
            scanned: 0,
            excluded: 0,
            super_bad: 0,
            worst_deficit: f64::NEG_INFINITY,
            cone_bad: 0,
            first_cone: None,
        };
        for l in i0 * slab..(i0 + 1) * slab {
            let idx = field.unravel(l);
            if !field.is_interior(idx, margin) || field.data[l] < floor_u {
                continue;
            }
            c.scanned += 1;
            let jet = field.jet_unchecked(idx, 1);
            let a = assemble_a(&jet, rho);
            let st = cone_status(&a);
            if !st.in_positive {
                c.cone_bad += 1;
                c.first_cone.get_or_insert(idx);
                continue;
            }
            let fu = f_spec.f(jet.value);
            let deficit = (fu - st.sigma2) / fu;
            c.worst_deficit = c.worst_deficit.max(deficit);
            if deficit > opts.supersolution_slack {
                c.super_bad += 1;
            }
            let gn = norm4(jet.gradient);
            if gn < grad_floor || gn == 0.0 {
                c.excluded += 1;
                continue;
            }
            let coarse = opts.richardson.then(|| field.jet_unchecked(idx, stride));
            let big_f_u = big_f.eval(jet.value);
            let x_dot_g = dot4(jet.point, jet.gradient);
            let mut curvature: Option<f64> = None;
            for (k, &t) in t_grid.iter().enumerate() {
                let acc = &mut c.levels[k];
                if let Some((terms, cut)) = vol_terms(&jet, rho, h, t, ft[k], big_f_u) {
                    for (s, x) in acc.vol.iter_mut().zip(terms) {
                        s.add(x);
                    }
                    acc.cut += cut as usize;
                }
                if let Some(cj) = &coarse {
                    if let Some((terms, _)) = vol_terms(cj, rho, h, t, ft[k], big_f_u) {
                        for (s, x) in acc.coarse.iter_mut().zip(terms) {
                            s.add(x);
                        }
                    }
                }
                let psi = cell_level_density(&jet, h, t);
                if psi > 0.0 {
                    let hc = *curvature.get_or_insert_with(|| {
                        frame_decompose(&jet, rho, grad_floor).map(|fd| fd.mean_curvature).unwrap_or(0.0)
                    });
                    let wt = gn * psi;
                    let g2 = gn * gn;
                    acc.surf[0].add(wt);
                    acc.surf[1].add(wt * g2 * gn * x_dot_g);
                    acc.surf[2].add(wt * hc * g2);
                    acc.surf[3].add(wt * hc * g2 * x_dot_g);
                }
            }
        }
        c
    };
    let chunks: Vec<Chunk> = (0..field.extent[0]).into_par_iter().map(run_chunk).collect();

    let mut levels = vec![RawLevel::default(); t_grid.len()];
    let (mut scanned, mut excluded, mut super_bad, mut cone_bad) = (0, 0, 0, 0);
    let mut worst = f64::NEG_INFINITY;
    let mut first_cone = None;
    for c in &chunks {
        scanned += c.scanned;
        excluded += c.excluded;
        super_bad += c.super_bad;
        cone_bad += c.cone_bad;
        worst = worst.max(c.worst_deficit);
        if first_cone.is_none() {
            first_cone = c.first_cone;
        }
        for (dst, src) in levels.iter_mut().zip(&c.levels) {
            for j in 0..4 {
                dst.vol[j].merge(&src.vol[j]);
                dst.coarse[j].merge(&src.coarse[j]);
                dst.surf[j].merge(&src.surf[j]);
            }
            dst.cut += src.cut;
        }
    }
    if cone_bad > 0 {
        return Err(Error::ConeViolation { count: cone_bad, first: first_cone.unwrap() });
    }
    let scale = field.cell_volume() / SPHERE_AREA;
    let levels = levels
        .iter()
        .zip(t_grid)
        .map(|(r, &t)| {
            let v = r.vol.map(|s| s.value() * scale);
            let s = r.surf.map(|s| s.value() * scale);
            LevelAccum {
                t,
                volume: v[0],
                sigma2: v[1],
                div_flux: v[2],
                potential: v[3],
                area: s[0],
                surf_grad_radial: s[1],
                surf_curv: s[2],
                surf_curv_radial: s[3],
                coarse: opts.richardson.then(|| r.coarse.map(|s| s.value() * scale)),
                cut_cells: r.cut,
            }
        })
        .collect();
    Ok(LevelSetBinning {
        rho,
        f_spec: f_spec.clone(),
        options: *opts,
        levels,
        scanned_cells: scanned,
        excluded_cells: excluded,
        supersolution_violations: super_bad,
        worst_supersolution_deficit: worst,
        t_ref: field.min_max().1,
    })
}

impl LevelAccum {
    pub fn q(&self) -> f64 {
        self.div_flux.cbrt()
    }

    pub fn mass(&self, rho: f64) -> f64 {
        mass_from_parts(rho, self.sigma2, self.potential, self.q())
    }

    /// Mass from the stride-2 sums.
    pub fn coarse_mass(&self, rho: f64) -> Option<f64> {
        self.coarse.map(|c| mass_from_parts(rho, c[1], c[3], c[2].cbrt()))
    }

    /// Boundary-only form `(9 rho/8)(Q^4 + S_a) + Q S_b - S_c` with
    /// `S_a`, `S_b`, `S_c` the surface averages stored above.
    pub fn mass_alt(&self, rho: f64) -> f64 {
        let q = self.q();
        1.125 * rho * (q.powi(4) + self.surf_grad_radial) + q * self.surf_curv - self.surf_curv_radial
    }
}

/// Mass scan of a grid field from [`level_set_binning`].
pub fn mass_scan_grid(
    field: &ScalarField4,
    rho: f64,
    f_spec: &ForcingSpec,
    t_grid: &[f64],
    opts: &BinningOptions,
) -> Result<MassScan> {
    let b = level_set_binning(field, rho, f_spec, t_grid, opts)?;
    Ok(b.to_scan())
}

impl LevelSetBinning {
    pub fn to_scan(&self) -> MassScan {
        let rho = self.rho;
        let t: Vec<f64> = self.levels.iter().map(|l| l.t).collect();
        let m: Vec<f64> = self.levels.iter().map(|l| l.mass(rho)).collect();
        let m_error = self.options.richardson.then(|| {
            self.levels.iter().zip(&m).map(|(l, mh)| (mh - l.coarse_mass(rho).unwrap()).abs() / 3.0).collect()
        });
        MassScan {
            rho,
            f_spec: self.f_spec.clone(),
            source: ScanSource::Grid,
            n: self.levels.iter().map(|l| l.sigma2).collect(),
            p: self.levels.iter().map(|l| l.potential).collect(),
            q: self.levels.iter().map(|l| l.q()).collect(),
            v: self.levels.iter().map(|l| l.volume).collect(),
            m_alt: self.levels.iter().map(|l| l.mass_alt(rho)).collect(),
            dm_estimate: three_point(&t, &m),
            m,
            m_error,
            isoperimetric_ratio: Some(self.levels.iter().map(|l| l.area.powi(4) / (64.0 * l.volume.powi(3))).collect()),
            t_grid: t,
            grid: Some(GridScanInfo {
                binning: self.options,
                scanned_cells: self.scanned_cells,
                excluded_cells: self.excluded_cells,
                excluded_fraction: if self.scanned_cells > 0 {
                    self.excluded_cells as f64 / self.scanned_cells as f64
                } else {
                    0.0
                },
                supersolution_violations: self.supersolution_violations,
                worst_supersolution_deficit: self.worst_supersolution_deficit,
                t_ref: self.t_ref,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_has_unit_mass() {
        let w = 0.3;
        let n = 20000;
        let dx = 2.0 * w / n as f64;
        let s: f64 = (0..n).map(|i| kernel(-w + (i as f64 + 0.5) * dx, w) * dx).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fraction_one_direction() {
        assert!((cube_fraction_below(0.1, [1.0, 0.0, 0.0, 0.0]) - 0.6).abs() < 1e-14);
        assert_eq!(cube_fraction_below(2.0, [1.0, 1.0, 1.0, 1.0]), 1.0);
        assert_eq!(cube_fraction_below(-2.0, [1.0, 1.0, 1.0, 1.0]), 0.0);
        assert!((cube_fraction_below(0.0, [0.3, -1.0, 2.0, 0.7]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fraction_two_directions() {
        // {y1 + y2 < d} in the unit square centred at 0, d in [0, 1]
        let d = 0.4;
        let want = 1.0 - 0.5 * (1.0 - d) * (1.0 - d);
        assert!((cube_fraction_below(d, [1.0, 1.0, 0.0, 0.0]) - want).abs() < 1e-14);
    }

    #[test]
    fn fraction_matches_sampling() {
        let a = [0.3, -0.8, 0.5, 1.1];
        let d = 0.2;
        let m = 24;
        let mut inside = 0usize;
        let c = |i: usize| (i as f64 + 0.5) / m as f64 - 0.5;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        if a[0] * c(i) + a[1] * c(j) + a[2] * c(k) + a[3] * c(l) < d {
                            inside += 1;
                        }
                    }
                }
            }
        }
        let est = inside as f64 / (m as f64).powi(4);
        assert!((cube_fraction_below(d, a) - est).abs() < 5e-3);
    }
}
