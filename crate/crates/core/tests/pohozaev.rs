use std::f64::consts::PI;

use sigma2lab::field::ScalarField4;
use sigma2lab::forcing::{ForcingSpec, KSpec};
use sigma2lab::pohozaev::{
    mass_pohozaev_consistency, mass_pohozaev_consistency_with, pohozaev_grid, pohozaev_radial, Domain,
    PohozaevGridOptions,
};
use sigma2lab::radial::{solve_radial, solve_radial_general, RadialOptions};
use sigma2lab::Error;

fn radial_field(n: usize, half: f64, rho: f64, eps: f64) -> (ScalarField4, sigma2lab::radial::RadialProfile) {
    let p = solve_radial(rho, eps, &RadialOptions::default()).unwrap();
    let f = ScalarField4::centered_cube(n, half, |x| p.radial_derivatives(x.iter().map(|v| v * v).sum::<f64>().sqrt()).0)
        .unwrap();
    (f, p)
}

#[test]
fn unit_ball_rho0_matches_hand_value() {
    let p = solve_radial(0.0, 1.35, &RadialOptions::default()).unwrap();
    let r = pohozaev_radial(&p, 1.0, &KSpec::default()).unwrap();
    // H = 3, <x, nu> = 1, |du| = 1.35 on the unit sphere: (2/3) * 3 * 1.35^3 * 2 pi^2.
    let hand = 2.0 * PI * PI * 2.0 * 1.35f64.powi(3);
    assert!((r.rhs - hand).abs() < 1e-9 * hand);
    assert!((r.rhs - 97.13).abs() < 0.01);
    assert!(r.rel_residual <= 1e-8, "{}", r.rel_residual);
    assert_eq!(r.anchor.tau, p.eval(0.0)[0]);
    assert_eq!(r.domain, Domain::Ball { radius: 1.0 });
}

#[test]
fn radial_identity_over_rho_and_radius() {
    // rho = 1.5 profiles end at a finite radius; ln 2 stays below it.
    let short = RadialOptions { s_max: 1.0, ..Default::default() };
    for (rho, eps, opts) in [(0.0, 1.0, RadialOptions::default()), (0.5, 0.8, Default::default()), (1.0, 1.2, Default::default()), (1.5, 0.1, short)] {
        let p = solve_radial(rho, eps, &opts).unwrap();
        for radius in [0.5, 1.0, 2.0] {
            let r = pohozaev_radial(&p, radius, &KSpec::default()).unwrap();
            assert!(r.rel_residual <= 1e-6, "rho={rho} R={radius}: {}", r.rel_residual);
            assert!(r.lhs > 0.0);
        }
    }
}

#[test]
fn gaussian_weight_uses_the_gradient_term() {
    let k = KSpec::Gaussian { base: 1.0, amplitude: 0.1, width: 1.0 };
    let p = solve_radial_general(0.5, 0.8, &ForcingSpec::three_halves(), &k, &RadialOptions::default()).unwrap();
    for radius in [0.7, 1.0, 1.8] {
        let r = pohozaev_radial(&p, radius, &k).unwrap();
        assert!(r.rel_residual <= 1e-6, "R={radius}: {}", r.rel_residual);
        // Dropping the weight correction breaks the identity.
        let wrong = pohozaev_radial(&p, radius, &KSpec::Gaussian { base: 1.0, amplitude: 0.0, width: 1.0 }).unwrap();
        assert!(wrong.rel_residual > 1e-4);
    }
}

#[test]
fn shrinking_ball_sends_both_sides_to_zero() {
    let p = solve_radial(0.5, 0.8, &RadialOptions::default()).unwrap();
    let r = pohozaev_radial(&p, 1e-3, &KSpec::default()).unwrap();
    assert!(r.lhs.abs() < 1e-8 && r.rhs.abs() < 1e-8);
}

#[test]
fn radius_beyond_profile_is_rejected() {
    let p = solve_radial(0.5, 0.8, &RadialOptions::default()).unwrap();
    assert!(matches!(pohozaev_radial(&p, 1e6, &KSpec::default()), Err(Error::InsufficientRange(_))));
}

#[test]
fn report_json_fields() {
    let p = solve_radial(0.0, 1.35, &RadialOptions::default()).unwrap();
    let r = pohozaev_radial(&p, 1.0, &KSpec::default()).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in ["lhs", "rhs", "abs_residual", "rel_residual", "domain", "K_spec", "anchor"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn mass_bridge_radial() {
    let p = solve_radial(0.5, 0.8, &RadialOptions::default()).unwrap();
    for t in [p.u_max() - 1e-3, p.u_max() - 0.5, p.u_max() - 3.0] {
        assert!(mass_pohozaev_consistency(&p, t).unwrap() <= 1e-8);
    }
    let half = ForcingSpec::three_halves().scaled(0.5);
    assert!(mass_pohozaev_consistency_with(&p, &half, p.u_max() - 1.0).unwrap() > 1e-3);
}

#[test]
fn grid_identity_is_second_order() {
    let (rho, eps, half, w) = (0.5, 0.2, 3.0, 0.15);
    let mut res = Vec::new();
    for n in [24, 48] {
        let (f, p) = radial_field(n, half, rho, eps);
        let t = p.eval(1.2f64.ln())[0];
        let opts = PohozaevGridOptions { kernel_half_width: Some(w), ..Default::default() };
        let r = pohozaev_grid(&f, rho, &p.forcing, t, &KSpec::default(), &opts).unwrap();
        res.push(r.abs_residual);
    }
    let ratio = res[0] / res[1];
    assert!((3.0..5.5).contains(&ratio), "{res:?}");
}

#[test]
fn grid_refuses_non_solutions() {
    let (f, p) = radial_field(16, 3.0, 0.5, 0.2);
    let t = p.eval(1.2f64.ln())[0];
    let doubled = ForcingSpec::three_halves().scaled(2.0);
    let err = pohozaev_grid(&f, 0.5, &doubled, t, &KSpec::default(), &PohozaevGridOptions::default());
    assert!(matches!(err, Err(Error::NotASolution { .. })), "{err:?}");
}

#[test]
fn grid_level_must_stay_inside() {
    let (f, p) = radial_field(16, 3.0, 0.5, 0.2);
    let t = p.eval(2.9f64.ln())[0];
    let err = pohozaev_grid(&f, 0.5, &p.forcing, t, &KSpec::default(), &PohozaevGridOptions::default());
    assert!(matches!(err, Err(Error::LevelTouchesBoundary { .. })), "{err:?}");
}
