use sigma2lab::asymptotics::{
    alpha_fit, blowdown_convergence, concavity_defect, extremal_radii, sphere_envelopes, BlowdownOptions, LevelData,
};
use sigma2lab::field::ScalarField4;
use sigma2lab::radial::{asymptotic_slope, solve_radial, RadialOptions, RadialProfile};
use sigma2lab::{Error, Result};

fn long_profile(rho: f64, eps: f64) -> RadialProfile {
    solve_radial(rho, eps, &RadialOptions { s_max: 20.0, ..Default::default() }).unwrap()
}

fn levels(hi: f64, lo: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| hi - step * i as f64).collect()
}

/// `u = alpha0 ln|x|` exactly.
struct PureLog(f64);

impl LevelData for PureLog {
    fn extremal_radii(&self, t: f64) -> Result<(f64, f64)> {
        let r = (t / self.0).exp();
        Ok((r, r))
    }
    fn blowdown_sup_error(&self, _: f64, _: f64, alpha: f64, annulus: f64) -> Result<f64> {
        Ok((self.0 - alpha).abs() * annulus.ln())
    }
    fn gradient_alignment_error(&self, _: f64, alpha: f64) -> Result<f64> {
        Ok((self.0 - alpha).abs())
    }
}

fn perturbed_field(amp: f64, bump: bool) -> (ScalarField4, RadialProfile) {
    let p = solve_radial(0.5, 0.2, &RadialOptions::default()).unwrap();
    let f = ScalarField4::centered_cube(32, 3.0, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let extra = if bump {
            let d2 = (x[0] - 1.2).powi(2) + x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
            amp * (-d2 / 0.09).exp()
        } else {
            amp * x[0] * x[1] / (1.0 + r2).powi(2)
        };
        p.radial_derivatives(r2.sqrt()).0 + extra
    })
    .unwrap();
    (f, p)
}

#[test]
fn radial_level_sets_are_spheres() {
    let p = long_profile(0.5, 0.8);
    for t in [0.0, -1.0, -5.0] {
        let (a, b) = extremal_radii(&p, t).unwrap();
        assert_eq!(a, b);
        assert!((p.eval(a.ln())[0] - t).abs() < 1e-10);
    }
    assert!(matches!(extremal_radii(&p, p.u_max() + 0.1), Err(Error::EmptyLevelSet { .. })));
}

#[test]
fn fitted_slope_rho0() {
    let p = long_profile(0.0, 1.35);
    let fit = alpha_fit(&p, &levels(-2.0, -24.0, 1.0)).unwrap();
    assert!((fit.alpha + 1.5).abs() < 1e-3, "{fit:?}");
    assert!(fit.decades >= 4.0);
}

#[test]
fn fitted_slope_rho_half() {
    let p = long_profile(0.5, 0.8);
    let fit = alpha_fit(&p, &levels(-2.0, -24.0, 1.0)).unwrap();
    let want = asymptotic_slope(0.5).unwrap();
    assert!((want + 1.5695).abs() < 1e-4);
    assert!((fit.alpha - want).abs() < 1e-3, "{fit:?}");
    assert!(fit.alpha >= -2.0 / 0.5 - 0.01 && fit.alpha < -1.0);
}

#[test]
fn fitted_slope_pure_log_is_exact() {
    let fit = alpha_fit(&PureLog(-1.7), &levels(-1.0, -30.0, 1.0)).unwrap();
    assert!((fit.alpha + 1.7).abs() < 1e-12);
    assert!(fit.residual < 1e-12);
}

#[test]
fn shallow_sequences_are_refused() {
    let p = long_profile(0.5, 0.8);
    assert!(matches!(alpha_fit(&p, &levels(-2.0, -12.0, 2.0)), Err(Error::InsufficientRange(_))));
}

#[test]
fn radial_blowdown_converges() {
    let p = long_profile(0.5, 0.8);
    let ts = levels(-2.0, -12.0, 2.0);
    let rep = blowdown_convergence(&p, &ts, &BlowdownOptions::default()).unwrap();
    assert!(rep.sup_log_radius_error.iter().all(|&e| e == 0.0));
    assert!(rep.errors_non_increasing(0.0));
    assert!(*rep.gradient_alignment_error.last().unwrap() <= 1e-2);
    assert!(rep.radii_consistent() && rep.ratio_trend_bounded());
    assert_eq!(rep.alpha, asymptotic_slope(0.5).unwrap());
    // Too shallow for a fit, so only the explicit slope is used.
    assert!(rep.alpha_fit.is_none());
    let csv = rep.to_csv();
    assert!(csv.starts_with("t,r_min,r_max,sup_err,grad_err\n"));
    assert_eq!(csv.lines().count(), ts.len() + 1);
}

#[test]
fn bump_stretches_the_level_set_slightly() {
    let (f, p) = perturbed_field(0.01 * 0.545, true);
    let t = p.eval(1.2f64.ln())[0];
    let (a, b) = extremal_radii(&f, t).unwrap();
    assert!(b / a > 1.0 && b / a < 1.05, "{a} {b}");
    assert!((a - 1.2).abs() < 0.05);
}

#[test]
fn grid_level_set_errors() {
    let (f, p) = perturbed_field(0.0, false);
    assert!(matches!(extremal_radii(&f, p.u_max() + 1.0), Err(Error::EmptyLevelSet { .. })));
    let deep = p.eval(2.9f64.ln())[0];
    assert!(matches!(extremal_radii(&f, deep), Err(Error::LevelTouchesBoundary { .. })));
}

#[test]
fn perturbed_grid_blowdown_trends_down() {
    let (f, p) = perturbed_field(0.05, false);
    let ts: Vec<f64> = (0..6).map(|i| p.eval((0.7 + 0.1 * i as f64).ln())[0]).collect();
    let alpha = asymptotic_slope(0.5).unwrap();
    let rep = blowdown_convergence(&f, &ts, &BlowdownOptions { annulus: 2.0, alpha: Some(alpha) }).unwrap();
    assert!(rep.errors_non_increasing(0.0), "{}", rep.to_csv());
    assert!(rep.radii_consistent());
}

#[test]
fn escaping_level_set_reports_the_ratio() {
    let (f, p) = perturbed_field(0.05, true);
    let t = p.eval(1.2f64.ln())[0];
    let err = blowdown_convergence(&f, &[t], &BlowdownOptions { annulus: 1.01, alpha: Some(-1.5) });
    assert!(matches!(err, Err(Error::RatioBound { .. })), "{err:?}");
}

#[test]
fn envelopes_of_radial_grid_data() {
    let (f, _) = perturbed_field(0.0, false);
    let radii: Vec<f64> = (0..8).map(|k| 0.4 * 1.2f64.powi(k)).collect();
    let env = sphere_envelopes(&f, &radii).unwrap();
    let gap = env.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    assert!(gap < 5e-3, "{gap}");
    let lower: Vec<f64> = env.iter().map(|e| e.0).collect();
    assert!(concavity_defect(&radii, &lower) < 1e-2);
}
