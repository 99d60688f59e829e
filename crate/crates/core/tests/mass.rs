use std::f64::consts::PI;

use sigma2lab::field::ScalarField4;
use sigma2lab::mass::{
    dirichlet_boundary_mass, dirichlet_mass, level_grid, mass_radial, mass_scan_grid, mass_scan_radial,
    mass_scan_radial_with, npqv_radial, total_integral, total_integral_bound, total_integral_limit,
    total_integral_truncated, BinningOptions, BoundaryData,
};
use sigma2lab::radial::{asymptotic_slope, solve_radial, RadialOptions, RadialProfile};
use sigma2lab::{Error, SPHERE_AREA};

fn profile(rho: f64, eps: f64) -> RadialProfile {
    solve_radial(rho, eps, &RadialOptions::default()).unwrap()
}

fn scan_levels(p: &RadialProfile, span: f64, count: usize) -> Vec<f64> {
    level_grid(p.u_max() - 0.05, p.u_max() - 0.05 - span, count)
}

#[test]
fn sphere_quantities_for_rho0() {
    let p = profile(0.0, 1.35);
    for t in [0.5, -1.0, -4.0] {
        let q = npqv_radial(&p, t).unwrap();
        let s = p.s_of_level(t).unwrap();
        let v = p.eval(s)[1];
        assert!((q.q - v).abs() < 1e-14);
        assert!((q.n - 1.5 * v * v).abs() < 1e-14);
        // 12 P = 3 v^3 on exact profiles.
        assert!((12.0 * q.p - 3.0 * v.powi(3)).abs() < 1e-8, "t={t}");
        assert!((q.v - 0.25 * (4.0 * s).exp()).abs() < 1e-14 * q.v.max(1.0));
    }
    let deep = npqv_radial(&p, -17.0).unwrap();
    assert!((deep.n - 27.0 / 8.0).abs() < 1e-6);
}

#[test]
fn solutions_are_rigid() {
    for (rho, eps) in [(0.0, 1.35), (0.5, 0.8), (1.0, 1.2)] {
        let p = profile(rho, eps);
        let scan = mass_scan_radial(&p, &scan_levels(&p, 8.0, 30)).unwrap();
        for i in 0..scan.len() {
            assert!(scan.m[i].abs() <= 1e-6 * scan.q[i].powi(4).max(1.0), "rho={rho} i={i} M={}", scan.m[i]);
            assert!(scan.m_alt[i].abs() <= 1e-14);
        }
        assert!(scan.structural_violations(1e-12).is_empty());
        let (m, alt) = mass_radial(&p, scan.t_grid[3]).unwrap();
        assert_eq!((m, alt), (scan.m[3], scan.m_alt[3]));
    }
}

#[test]
fn deep_levels_approach_the_slope() {
    let p = solve_radial(0.5, 0.8, &RadialOptions { s_max: 20.0, ..Default::default() }).unwrap();
    let alpha = asymptotic_slope(0.5).unwrap();
    let scan = mass_scan_radial(&p, &level_grid(-2.0, -24.0, 12)).unwrap();
    let tail = scan.len() - 5;
    for i in tail..scan.len() {
        assert!(scan.m[i].abs() <= 1e-6 * scan.q[i].powi(4));
    }
    assert!((scan.q[scan.len() - 1] - alpha).abs() < 1e-6);
}

#[test]
fn supersolutions_are_monotone() {
    for (rho, eps) in [(0.0, 1.35), (0.5, 0.8), (1.0, 1.2)] {
        let p = profile(rho, eps);
        let half = p.forcing.scaled(0.5);
        let scan = mass_scan_radial_with(&p, &half, &scan_levels(&p, 8.0, 50)).unwrap();
        assert!(scan.monotonicity_defect() <= 1e-8, "rho={rho}");
        assert!(scan.max_increase() >= 1e-3, "rho={rho}");
        assert!(scan.dm_estimate.iter().flatten().all(|&d| d >= -1e-6));
        assert!(scan.structural_violations(1e-12).is_empty());
    }
}

#[test]
fn dirichlet_sign() {
    let p = profile(0.5, 0.8);
    for r in [0.3, 1.0, 4.0] {
        assert!(dirichlet_boundary_mass(&p, r, 0.5).unwrap().abs() < 1e-12);
    }
    let two = BoundaryData { grad_norm: vec![1.0, 2.0], weight: vec![0.5, 0.5] };
    assert!(dirichlet_mass(&two, -1.0) >= 0.0);
    for rho in [-2.0, -0.5, 0.0] {
        let spread = BoundaryData { grad_norm: vec![0.3, 0.9, 1.4, 2.2], weight: vec![0.1, 0.4, 0.3, 0.2] };
        assert!(dirichlet_mass(&spread, rho) >= 0.0, "rho={rho}");
    }
    assert!(dirichlet_mass(&BoundaryData::constant(0.4), 1.3).abs() < 1e-14);
}

#[test]
fn total_integrals() {
    let p = profile(0.0, 1.35);
    let ti = total_integral(&p).unwrap();
    let want = 27.0 * PI * PI / 4.0;
    assert!((ti.value - want).abs() <= 1e-6 * want, "{}", ti.value);
    assert!((total_integral_limit(0.0, -1.5) - want).abs() < 1e-12);
    assert!(total_integral_truncated(&p, 2.0) < ti.value);
    for (rho, eps) in [(0.25, 1.0), (0.5, 0.8), (1.0, 1.2)] {
        let ti = total_integral(&profile(rho, eps)).unwrap();
        let alpha = asymptotic_slope(rho).unwrap();
        let lim = total_integral_limit(rho, alpha);
        assert!((ti.value - lim).abs() <= 1e-6 * lim, "rho={rho} {} {lim}", ti.value);
        // Equality at rho = 1, where alpha sits on the cone edge.
        assert!(ti.value <= total_integral_bound(rho) * (1.0 + 1e-12), "rho={rho}");
    }
    assert!((total_integral_bound(1.0) - 2.0 * SPHERE_AREA).abs() < 1e-12);
}

#[test]
fn grid_scan_tracks_radial_scan() {
    let rho = 0.5;
    let p = profile(rho, 0.2);
    let half = 3.0;
    let f = ScalarField4::centered_cube(24, half, |x| p.radial_derivatives(x.iter().map(|v| v * v).sum::<f64>().sqrt()).0)
        .unwrap();
    let ts: Vec<f64> = (0..5).map(|i| p.eval((0.3 * half + 0.05 * half * i as f64).ln())[0]).collect();
    let grid = mass_scan_grid(&f, rho, &p.forcing, &ts, &BinningOptions::default()).unwrap();
    let radial = mass_scan_radial(&p, &ts).unwrap();
    let err = grid.m_error.as_ref().unwrap();
    for i in 0..ts.len() {
        assert!((grid.m[i] - radial.m[i]).abs() <= (2e-2f64).max(3.0 * err[i]), "i={i}");
        assert!((grid.v[i] - radial.v[i]).abs() <= 1e-2 * radial.v[i]);
    }
    let iso = grid.isoperimetric_ratio.unwrap();
    assert!(iso.iter().all(|&r| (r - 1.0).abs() < 0.05));
    assert!(matches!(
        mass_scan_grid(&f, rho, &p.forcing, &[p.eval((0.95 * half).ln())[0]], &BinningOptions::default()),
        Err(Error::LevelTouchesBoundary { .. })
    ));
}

#[test]
fn cone_violation_reported() {
    let f = ScalarField4::centered_cube(12, 1.0, |x| x.iter().map(|v| v * v).sum::<f64>()).unwrap();
    let r = mass_scan_grid(&f, 0.0, &sigma2lab::forcing::ForcingSpec::three_halves(), &[0.1], &BinningOptions::default());
    assert!(matches!(r, Err(Error::ConeViolation { .. }) | Err(Error::LevelTouchesBoundary { .. })));
}
