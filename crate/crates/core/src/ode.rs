//! Adaptive Dormand-Prince 5(4) integrator for small autonomous or
//! non-autonomous systems, with output on a prescribed grid.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct DormandPrince {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub min_step: f64,
}

impl DormandPrince {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, max_steps: 2_000_000, min_step: 1e-14 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl DormandPrince {
    /// Integrates `y' = f(t, y)` from `(t0, y0)` through every point of
    /// `outputs` (monotone, all on one side of `t0`), landing on each exactly.
    ///
    /// `f` returns `None` when the state leaves the admissible region; the step
    /// is then rejected and retried with a smaller size.
    pub fn integrate<const N: usize, F>(&self, mut f: F, t0: f64, y0: [f64; N], outputs: &[f64]) -> Result<Vec<[f64; N]>>
    where
        F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    {
        let mut out = Vec::with_capacity(outputs.len());
        if outputs.is_empty() {
            return Ok(out);
        }
        let dir = if outputs.iter().any(|&x| x < t0) { -1.0 } else { 1.0 };
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y).ok_or(Error::OdeStalled { at: t, step: 0.0 })?;
        let mut h = 1e-3 * dir;
        let mut steps = 0usize;
        for &target in outputs {
            if (target - t) * dir < 0.0 {
                return Err(Error::Invalid("ODE output grid is not monotone".into()));
            }
            while (target - t) * dir > 0.0 {
                steps += 1;
                if steps > self.max_steps {
                    return Err(Error::OdeTooManySteps(self.max_steps));
                }
                let remaining = target - t;
                let last = h.abs() >= remaining.abs();
                let hh = if last { remaining } else { h };
                match self.step(&mut f, t, &y, &k1, hh) {
                    Some((ynew, knew, err)) if err <= 1.0 => {
                        t = if last { target } else { t + hh };
                        y = ynew;
                        k1 = knew;
                        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                        h = hh * fac;
                        if last && fac > 1.0 {
                            h = h.abs().max(hh.abs()) * dir;
                        }
                    }
                    Some((_, _, err)) => {
                        h = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                    }
                    None => {
                        h = hh * 0.25;
                    }
                }
                if h.abs() < self.min_step {
                    return Err(Error::OdeStalled { at: t, step: h.abs() });
                }
            }
            out.push(y);
        }
        Ok(out)
    }

    fn step<const N: usize, F>(&self, f: &mut F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64) -> Option<([f64; N], [f64; N], f64)>
    where
        F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
    {
        let mut k = [[0.0; N]; 7];
        k[0] = *k1;
        for s in 1..7 {
            let mut ys = *y;
            for (i, yi) in ys.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                *yi += h * acc;
            }
            k[s] = f(t + C[s] * h, &ys)?;
        }
        let mut y5 = *y;
        let mut err2 = 0.0;
        for i in 0..N {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            let sc = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
            let e = h * (d5 - d4) / sc;
            err2 += e * e;
        }
        if y5.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // FSAL: the last stage is f at the new point.
        Some((y5, k[6], (err2 / N as f64).sqrt()))
    }
}
