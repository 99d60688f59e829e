use crate::error::{Error, Result};
use crate::forcing::{ForcingSpec, KSpec};
use crate::ode::DormandPrince;

use super::{admissible_gauge, asymptotic_slope, existence_limit, root_analysis, RadialProfile};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialOptions {
    pub s_min: f64,
    pub s_max: f64,
    /// Output grid spacing in `s`.
    pub step: f64,
    /// Relative integration tolerance.
    pub tolerance: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self { s_min: -12.0, s_max: 12.0, step: 1.0 / 64.0, tolerance: 1e-10 }
    }
}

impl RadialOptions {
    fn grid(&self) -> Result<Vec<f64>> {
        if !(self.s_min < self.s_max && self.step > 0.0 && self.tolerance > 0.0) {
            return Err(Error::Invalid("radial options need s_min < s_max, step > 0, tolerance > 0".into()));
        }
        let n = ((self.s_max - self.s_min) / self.step).round().max(2.0) as usize;
        let mut g: Vec<f64> = (0..=n).map(|k| self.s_min + k as f64 * (self.s_max - self.s_min) / n as f64).collect();
        g[n] = self.s_max;
        Ok(g)
    }

    fn integrator(&self) -> DormandPrince {
        DormandPrince::new(0.1 * self.tolerance, 0.1 * self.tolerance)
    }
}

/// Integration of `v = u_s` for `f = (3/2) e^{4u}`, `K = 1`.
///
/// The state is `w = ln(-v)` together with `z = ln(v - x1)` when `q` has a
/// real root `x1`; both stay well conditioned as `v -> 0` and `v -> x1`.
/// `u` is then read off the first integral.
struct SlopeSystem {
    rho: f64,
    /// `q(v) = c (v - x1) m(v)`
    c: f64,
    x1: Option<f64>,
    /// `x1 - x2` (zero when `rho = 0`, where `m = 1`)
    delta: f64,
    /// `x1 + 2/rho`, so that `1 + rho v / 2 = (rho/2)(v - x1 + d)`
    d: f64,
}

impl SlopeSystem {
    fn new(rho: f64) -> Self {
        let roots = root_analysis(rho);
        match (roots.x1, roots.x2) {
            (Some(x1), Some(x2)) => Self { rho, c: 0.25 * rho, x1: Some(x1), delta: x1 - x2, d: x1 + 2.0 / rho },
            (Some(x1), None) => Self { rho, c: 2.0 / 3.0, x1: Some(x1), delta: 0.0, d: 0.0 },
            _ => Self { rho, c: 0.0, x1: None, delta: 0.0, d: 0.0 },
        }
    }

    fn initial(&self, epsilon: f64) -> [f64; 2] {
        match self.x1 {
            Some(x1) => [epsilon.ln(), (-epsilon - x1).ln()],
            None => [epsilon.ln(), 0.0],
        }
    }

    /// `(m, D)` with `D = 1 + rho v / 2`, from `e^z`.
    fn factors(&self, ez: f64) -> (f64, f64) {
        if self.rho == 0.0 {
            (1.0, 1.0)
        } else {
            (ez + self.delta, 0.5 * self.rho * (ez + self.d))
        }
    }

    fn rhs(&self, y: &[f64; 2]) -> Option<[f64; 2]> {
        let v = -y[0].exp();
        match self.x1 {
            Some(_) => {
                let ez = y[1].exp();
                let (m, d) = self.factors(ez);
                if !(d > 0.0 && m > 0.0) {
                    return None;
                }
                Some([2.0 * self.c * ez * m / d, 2.0 * v * self.c * m / d])
            }
            None => {
                let d = 1.0 + 0.5 * self.rho * v;
                if !(d > 0.0) {
                    return None;
                }
                Some([2.0 * super::slope_quadratic(self.rho, v) / d, 0.0])
            }
        }
    }

    /// `(u, u_s, u_ss)` at `s`.
    fn observe(&self, s: f64, y: &[f64; 2]) -> [f64; 3] {
        let w = y[0];
        let dy = self.rhs(y).unwrap_or([f64::NAN, f64::NAN]);
        match self.x1 {
            Some(x1) => {
                let ez = y[1].exp();
                let (m, _) = self.factors(ez);
                let v = if w < y[1] { -w.exp() } else { x1 + ez };
                let u = (4f64.ln() + 2.0 * w + self.c.ln() + y[1] + m.ln()) / 4.0 - s;
                [u, v, v * dy[0]]
            }
            None => {
                let v = -w.exp();
                let u = (4f64.ln() + 2.0 * w + super::slope_quadratic(self.rho, v).ln()) / 4.0 - s;
                [u, v, v * dy[0]]
            }
        }
    }
}

/// Solves the radial problem with `f = (3/2) e^{4u}`, `K = 1` and gauge
/// `u_s(0) = -epsilon`.
pub fn solve_radial(rho: f64, epsilon: f64, opts: &RadialOptions) -> Result<RadialProfile> {
    let (lo, hi) = admissible_gauge(rho)?;
    if !(epsilon > lo && epsilon < hi) {
        return Err(Error::InadmissibleGauge { rho, epsilon, lo, hi });
    }
    if let Some(s_break) = existence_limit(rho, epsilon)? {
        if opts.s_max >= s_break {
            return Err(Error::ConeBreakdown { s_break, s_max: opts.s_max });
        }
    }
    let grid = opts.grid()?;
    let sys = SlopeSystem::new(rho);
    let y0 = sys.initial(epsilon);
    let dp = opts.integrator();
    let split = grid.partition_point(|&s| s < 0.0);
    let back: Vec<f64> = grid[..split].iter().rev().cloned().collect();
    let fwd = &grid[split..];
    let f = |_: f64, y: &[f64; 2]| sys.rhs(y);
    let stalled = |e| match e {
        Error::OdeStalled { at, .. } => Error::ConeBreakdown { s_break: at, s_max: opts.s_max },
        other => other,
    };
    let yb = dp.integrate(f, 0.0, y0, &back).map_err(stalled)?;
    let yf = dp.integrate(f, 0.0, y0, fwd).map_err(stalled)?;

    let n = grid.len();
    let (mut u, mut u_s, mut u_ss) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (s, y) in grid.iter().zip(yb.iter().rev().chain(&yf)) {
        let [a, b, c] = sys.observe(*s, y);
        u.push(a);
        u_s.push(b);
        u_ss.push(c);
    }
    let mut profile = RadialProfile {
        rho,
        epsilon,
        s: grid,
        u,
        u_s,
        u_ss,
        alpha: asymptotic_slope(rho).ok(),
        forcing: ForcingSpec::three_halves(),
        k: KSpec::default(),
        tolerance: opts.tolerance,
        consistency_residual: 0.0,
    };
    finish(&mut profile)?;
    Ok(profile)
}

fn finish(profile: &mut RadialProfile) -> Result<()> {
    if let Some(i) = super::cone_violation(profile) {
        return Err(Error::InadmissibleParameters(format!(
            "cone condition fails at s={} (u_s={}, u_ss={})",
            profile.s[i], profile.u_s[i], profile.u_ss[i]
        )));
    }
    profile.consistency_residual = profile.compute_consistency();
    let bound = 10.0 * profile.tolerance;
    if profile.consistency_residual > bound {
        return Err(Error::InadmissibleParameters(format!(
            "recovered u is inconsistent with u_s to {:e} (> {bound:e}); refine the output step",
            profile.consistency_residual
        )));
    }
    Ok(())
}

/// Direct shooting for `3 u_ss v (1 + rho v/2) = K(e^s) e^{4(u+s)} p(u)`
/// with state `(u, ln(-v))`, seeded at `s_min` from the regular core
/// expansion `v ~ -a e^{2s}`, `a = e^{2 u0} sqrt(K(0) p(u0) / 6)`. The core
/// value `u0` is found by bisection so that `u_s(0) = -epsilon`.
pub fn solve_radial_general(
    rho: f64,
    epsilon: f64,
    forcing: &ForcingSpec,
    k: &KSpec,
    opts: &RadialOptions,
) -> Result<RadialProfile> {
    super::check_rho(rho)?;
    k.validate()?;
    let cone_hi = if rho > 0.0 { 2.0 / rho } else { f64::INFINITY };
    if !(epsilon > 0.0 && epsilon < cone_hi) {
        return Err(Error::InadmissibleGauge { rho, epsilon, lo: 0.0, hi: cone_hi });
    }
    if opts.s_min >= 0.0 {
        return Err(Error::Invalid("shooting needs s_min < 0".into()));
    }
    let grid = opts.grid()?;
    let s0 = grid[0];
    let dp = opts.integrator();
    let rhs = |s: f64, y: &[f64; 2]| -> Option<[f64; 2]> {
        let (u, w) = (y[0], y[1]);
        let d = 1.0 - 0.5 * rho * w.exp();
        let p = forcing.p(u);
        if !(d > 0.0 && p > 0.0) {
            return None;
        }
        let kk = k.at_radius(s.exp());
        let dw = kk * (4.0 * (u + s) - 2.0 * w).exp() * p / (3.0 * d);
        dw.is_finite().then_some([-w.exp(), dw])
    };
    let seed = |u0: f64| -> Option<[f64; 2]> {
        let p = forcing.p(u0);
        if !(p > 0.0) {
            return None;
        }
        let a = (2.0 * u0).exp() * (k.at_radius(0.0) * p / 6.0).sqrt();
        Some([u0 - 0.5 * a * (2.0 * s0).exp(), a.ln() + 2.0 * s0])
    };
    // g(u0) = -v(0) - epsilon, increasing in u0; failure means overshoot.
    let g = |u0: f64| -> f64 {
        let Some(y0) = seed(u0) else { return f64::NAN };
        match dp.integrate(rhs, s0, y0, &[0.0]) {
            Ok(y) => y[0][1].exp() - epsilon,
            Err(_) => f64::INFINITY,
        }
    };
    let mut a = 0.0f64;
    let mut b: f64;
    let ga = g(a);
    if ga.is_nan() {
        return Err(Error::InadmissibleParameters("p(u0) <= 0 at the initial core value".into()));
    }
    let mut step = 1.0;
    if ga < 0.0 {
        loop {
            b = a + step;
            let gb = g(b);
            if gb.is_nan() {
                return Err(Error::InadmissibleParameters(format!("p <= 0 at core value {b}")));
            }
            if gb >= 0.0 {
                break;
            }
            a = b;
            step *= 2.0;
            if step > 1e3 {
                return Err(Error::Shooting("could not bracket the gauge from below".into()));
            }
        }
    } else {
        b = a;
        loop {
            a = b - step;
            let gv = g(a);
            if gv.is_nan() {
                return Err(Error::InadmissibleParameters(format!("p <= 0 at core value {a}")));
            }
            if gv < 0.0 {
                break;
            }
            b = a;
            step *= 2.0;
            if step > 1e3 {
                return Err(Error::Shooting("could not bracket the gauge from above".into()));
            }
        }
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if g(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let u0 = 0.5 * (a + b);
    let y0 = seed(u0).ok_or_else(|| Error::Shooting("seed failed at converged core value".into()))?;
    let ys = dp.integrate(rhs, s0, y0, &grid[1..]).map_err(|e| match e {
        Error::OdeStalled { at, .. } => {
            Error::InadmissibleParameters(format!("solution leaves the admissible region (cone or p > 0) at s={at:.6}"))
        }
        other => other,
    })?;
    let n = grid.len();
    let (mut u, mut u_s, mut u_ss) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (s, y) in grid.iter().zip(std::iter::once(&y0).chain(&ys)) {
        let v = -y[1].exp();
        let dy = rhs(*s, y).ok_or_else(|| Error::InadmissibleParameters(format!("state inadmissible at s={s}")))?;
        u.push(y[0]);
        u_s.push(v);
        u_ss.push(v * dy[1]);
    }
    let alpha = if forcing.is_three_halves() && k.is_unit() {
        asymptotic_slope(rho).ok()
    } else {
        Some(*u_s.last().unwrap())
    };
    let mut profile = RadialProfile {
        rho,
        epsilon,
        s: grid,
        u,
        u_s,
        u_ss,
        alpha,
        forcing: forcing.clone(),
        k: *k,
        tolerance: opts.tolerance,
        consistency_residual: 0.0,
    };
    finish(&mut profile)?;
    Ok(profile)
}

/// `max |3 u_s (1 + rho u_s/2) u_ss - K e^{4(u+s)} p(u)| / max |rhs|` with
/// `u_ss` from a seven-point centered difference of the sampled `u_s`.
pub fn ode_residual(profile: &RadialProfile) -> f64 {
    const C: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    let n = profile.len();
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            let s = profile.s[i];
            profile.k.at_radius(s.exp()) * (4.0 * s).exp() * profile.forcing.f(profile.u[i])
        })
        .collect();
    let scale = rhs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for i in 3..n.saturating_sub(3) {
        let h = profile.s[i + 1] - profile.s[i];
        let v = &profile.u_s;
        let dv = (C[0] * (v[i + 1] - v[i - 1]) + C[1] * (v[i + 2] - v[i - 2]) + C[2] * (v[i + 3] - v[i - 3])) / h;
        let lhs = 3.0 * v[i] * (1.0 + 0.5 * profile.rho * v[i]) * dv;
        worst = worst.max((lhs - rhs[i]).abs());
    }
    worst / scale
}
