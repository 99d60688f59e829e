use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{ForcingSpec, KSpec};

/// A radial solution `u(x) = U(s)`, `s = ln|x|`, sampled on an increasing
/// log-radius grid together with `U_s` and `U_ss`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    pub rho: f64,
    /// Gauge `u_s(0) = -epsilon`.
    pub epsilon: f64,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub u_s: Vec<f64>,
    pub u_ss: Vec<f64>,
    /// Asymptotic slope `lim u_s`; `None` when the profile is not entire.
    pub alpha: Option<f64>,
    pub forcing: ForcingSpec,
    pub k: KSpec,
    pub tolerance: f64,
    /// `max |u_{i+1} - u_i - int u_s|` over grid intervals.
    pub consistency_residual: f64,
}

/// JSON sidecar written next to a profile CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub rho: f64,
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub tolerance: f64,
    pub f_spec: ForcingSpec,
    #[serde(default)]
    pub k_spec: KSpec,
    #[serde(default)]
    pub consistency_residual: f64,
}

/// Coefficients of the quintic Hermite interpolant in `tau in [0, 1]`.
fn quintic(h: f64, y0: [f64; 3], y1: [f64; 3]) -> [f64; 6] {
    let d = y1[0] - y0[0];
    let (a0, a1) = (h * y0[1], h * y1[1]);
    let (b0, b1) = (h * h * y0[2], h * h * y1[2]);
    [
        y0[0],
        a0,
        0.5 * b0,
        10.0 * d - 6.0 * a0 - 4.0 * a1 - 1.5 * b0 + 0.5 * b1,
        -15.0 * d + 8.0 * a0 + 7.0 * a1 + 1.5 * b0 - b1,
        6.0 * d - 3.0 * a0 - 3.0 * a1 - 0.5 * b0 + 0.5 * b1,
    ]
}

fn poly_eval(c: &[f64; 6], tau: f64) -> [f64; 3] {
    let mut p = 0.0;
    let mut dp = 0.0;
    let mut ddp = 0.0;
    for k in (0..6).rev() {
        ddp = ddp * tau + 2.0 * dp;
        dp = dp * tau + p;
        p = p * tau + c[k];
    }
    [p, dp, ddp]
}

impl RadialProfile {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn s_min(&self) -> f64 {
        self.s[0]
    }

    pub fn s_max(&self) -> f64 {
        *self.s.last().unwrap()
    }

    /// `lim_{s -> -inf} u`, from the leading behaviour `u_s ~ c e^{2s}`.
    pub fn u_max(&self) -> f64 {
        self.u[0] - 0.5 * self.u_s[0]
    }

    pub fn u_min(&self) -> f64 {
        *self.u.last().unwrap()
    }

    /// `(u, u_s, u_ss)` at `s`. Below the grid the leading-order core
    /// expansion is used; above it the last slope is continued linearly.
    pub fn eval(&self, s: f64) -> [f64; 3] {
        let n = self.s.len();
        if s <= self.s[0] {
            let e = (2.0 * (s - self.s[0])).exp();
            let v0 = self.u_s[0];
            return [self.u[0] + 0.5 * v0 * (e - 1.0), v0 * e, 2.0 * v0 * e];
        }
        if s >= self.s[n - 1] {
            let v = self.u_s[n - 1];
            return [self.u[n - 1] + v * (s - self.s[n - 1]), v, 0.0];
        }
        let i = self.s.partition_point(|&x| x <= s).saturating_sub(1).min(n - 2);
        let h = self.s[i + 1] - self.s[i];
        let c = self.coeffs(i);
        let [p, dp, ddp] = poly_eval(&c, (s - self.s[i]) / h);
        [p, dp / h, ddp / (h * h)]
    }

    fn coeffs(&self, i: usize) -> [f64; 6] {
        let h = self.s[i + 1] - self.s[i];
        quintic(h, [self.u[i], self.u_s[i], self.u_ss[i]], [self.u[i + 1], self.u_s[i + 1], self.u_ss[i + 1]])
    }

    /// Log-radius where `u = t`.
    pub fn s_of_level(&self, t: f64) -> Result<f64> {
        let (lo, hi) = (self.u_min(), self.u_max());
        if !(t >= lo && t < hi) {
            return Err(Error::LevelOutOfRange { t, lo, hi });
        }
        if t >= self.u[0] {
            // u = u0 + (v0/2)(e^{2(s-s0)} - 1)
            let arg = 1.0 + 2.0 * (t - self.u[0]) / self.u_s[0];
            return Ok(self.s[0] + 0.5 * arg.ln());
        }
        // u is strictly decreasing on the grid.
        let j = self.u.partition_point(|&x| x > t);
        let i = j.saturating_sub(1).min(self.len() - 2);
        let h = self.s[i + 1] - self.s[i];
        let c = self.coeffs(i);
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let mut tau = ((self.u[i] - t) / (self.u[i] - self.u[i + 1])).clamp(0.0, 1.0);
        for _ in 0..100 {
            let [p, dp, _] = poly_eval(&c, tau);
            let r = p - t;
            if r > 0.0 {
                a = tau;
            } else {
                b = tau;
            }
            let mut next = tau - r / dp;
            if !(next > a && next < b) || dp >= 0.0 {
                next = 0.5 * (a + b);
            }
            if (next - tau).abs() < 1e-16 || b - a < 1e-16 {
                tau = next;
                break;
            }
            tau = next;
        }
        Ok(self.s[i] + tau * h)
    }

    /// `(u, u_r / r, u_rr)` at radius `r >= 0`.
    pub fn radial_derivatives(&self, r: f64) -> (f64, f64, f64) {
        if r <= 0.0 {
            let c = self.u_s[0] * (-2.0 * self.s[0]).exp();
            return (self.u_max(), c, c);
        }
        let s = r.ln();
        let [u, v, w] = self.eval(s);
        let r2 = r * r;
        (u, v / r2, (w - v) / r2)
    }

    /// `max_i |u_{i+1} - u_i - integral of u_s|` with the integral from the
    /// cubic Hermite interpolant of `u_s` (trapezoid plus end correction).
    pub fn compute_consistency(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() - 1 {
            let h = self.s[i + 1] - self.s[i];
            let quad = 0.5 * h * (self.u_s[i] + self.u_s[i + 1]) + h * h / 12.0 * (self.u_ss[i] - self.u_ss[i + 1]);
            worst = worst.max((self.u[i + 1] - self.u[i] - quad).abs());
        }
        worst
    }

    pub fn meta(&self) -> ProfileMeta {
        ProfileMeta {
            rho: self.rho,
            epsilon: self.epsilon,
            alpha: self.alpha,
            tolerance: self.tolerance,
            f_spec: self.forcing.clone(),
            k_spec: self.k,
            consistency_residual: self.consistency_residual,
        }
    }

    /// CSV with header `s,u,u_s`; values use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,u,u_s\n");
        for i in 0..self.len() {
            out.push_str(&format!("{:?},{:?},{:?}\n", self.s[i], self.u[i], self.u_s[i]));
        }
        out
    }

    /// Rebuilds a profile from its CSV and sidecar. `u_ss` is recomputed from
    /// the equation `3 u_ss u_s (1 + rho u_s / 2) = K e^{4s} f(u)`.
    pub fn from_csv(csv: &str, meta: &ProfileMeta) -> Result<Self> {
        let mut lines = csv.lines();
        match lines.next() {
            Some(h) if h.trim() == "s,u,u_s" => {}
            _ => return Err(Error::Invalid("profile CSV must start with header s,u,u_s".into())),
        }
        let (mut s, mut u, mut u_s) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Invalid(format!("profile CSV line {}: {e}", n + 2)))?;
            if vals.len() != 3 {
                return Err(Error::Invalid(format!("profile CSV line {}: expected 3 columns", n + 2)));
            }
            s.push(vals[0]);
            u.push(vals[1]);
            u_s.push(vals[2]);
        }
        if s.len() < 2 || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("profile s grid must be strictly increasing with at least 2 rows".into()));
        }
        let u_ss = (0..s.len())
            .map(|i| {
                let v = u_s[i];
                let d = 1.0 + 0.5 * meta.rho * v;
                meta.k_spec.at_radius(s[i].exp()) * (4.0 * s[i]).exp() * meta.f_spec.f(u[i]) / (3.0 * v * d)
            })
            .collect();
        let mut p = RadialProfile {
            rho: meta.rho,
            epsilon: meta.epsilon,
            s,
            u,
            u_s,
            u_ss,
            alpha: meta.alpha,
            forcing: meta.f_spec.clone(),
            k: meta.k_spec,
            tolerance: meta.tolerance,
            consistency_residual: 0.0,
        };
        p.consistency_residual = p.compute_consistency();
        Ok(p)
    }
}
