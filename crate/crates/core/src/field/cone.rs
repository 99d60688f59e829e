use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::symm::cone_status;

use super::{assemble_a, frame_decompose, ScalarField4, JET_MARGIN};

/// How many offending indices a report keeps.
const MAX_LISTED: usize = 16;

/// Cellwise cone test over every node with a centered jet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub rho: f64,
    pub interior_cells: usize,
    pub in_positive_cone: usize,
    pub fraction_in_cone: f64,
    /// Regular cells (`|du|` above the floor) where the level-set
    /// inequalities were tested.
    pub regular_cells: usize,
    pub critical_cells: usize,
    /// Cells with `div(|du|^2 du) >= 0` although `A` is in the cone.
    pub divergence_sign_violations: usize,
    /// Cells with `sigma_2(A) > sigma_1(A~)(H|du|/3 - u_44)`.
    pub curvature_bound_violations: usize,
    /// Cells with `sigma_1(A~) <= 0` although `A` is in the cone.
    pub tangential_trace_violations: usize,
    pub first_violations: Vec<[usize; 4]>,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    interior: usize,
    in_cone: usize,
    regular: usize,
    critical: usize,
    div_sign: usize,
    bound: usize,
    trace: usize,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.interior += o.interior;
        self.in_cone += o.in_cone;
        self.regular += o.regular;
        self.critical += o.critical;
        self.div_sign += o.div_sign;
        self.bound += o.bound;
        self.trace += o.trace;
        self
    }
}

/// Tests `A in Gamma_2^+` at every interior node. Where `rho >= 0` and the
/// gradient clears the critical floor, also tests the level-set
/// consequences `div(|du|^2 du) < 0`, `sigma_1(A~) > 0` and
/// `sigma_2(A) <= sigma_1(A~)(H|du|/3 - u_44)` (with a relative slack of
/// `1e-9` for round-off).
pub fn cone_check(field: &ScalarField4, rho: f64) -> ConeReport {
    let floor = field.gradient_floor();
    let per_cell = |l: usize| -> (Tally, bool) {
        let idx = field.unravel(l);
        let mut t = Tally::default();
        if !field.is_interior(idx, JET_MARGIN) {
            return (t, false);
        }
        t.interior = 1;
        let jet = field.jet_unchecked(idx, 1);
        let a = assemble_a(&jet, rho);
        let st = cone_status(&a);
        if !st.in_positive {
            return (t, true);
        }
        t.in_cone = 1;
        let mut bad = false;
        if rho >= 0.0 {
            match frame_decompose(&jet, rho, floor) {
                Ok(fd) => {
                    t.regular = 1;
                    let scale = a.frobenius_norm().powi(2) * 1e-9;
                    if fd.div_flux() >= 0.0 {
                        t.div_sign = 1;
                        bad = true;
                    }
                    let s1 = fd.sigma1_tangential();
                    if s1 <= 0.0 {
                        t.trace = 1;
                        bad = true;
                    }
                    let gn = fd.grad_norm;
                    if st.sigma2 > s1 * (fd.mean_curvature * gn / 3.0 - fd.u_nn) + scale {
                        t.bound = 1;
                        bad = true;
                    }
                }
                Err(_) => t.critical = 1,
            }
        }
        (t, bad)
    };
    let results: Vec<(Tally, bool)> = (0..field.len()).into_par_iter().map(per_cell).collect();
    let mut total = Tally::default();
    let mut first = Vec::new();
    for (l, (t, bad)) in results.into_iter().enumerate() {
        total = total.merge(t);
        if bad && first.len() < MAX_LISTED {
            first.push(field.unravel(l));
        }
    }
    ConeReport {
        rho,
        interior_cells: total.interior,
        in_positive_cone: total.in_cone,
        fraction_in_cone: if total.interior > 0 { total.in_cone as f64 / total.interior as f64 } else { 0.0 },
        regular_cells: total.regular,
        critical_cells: total.critical,
        divergence_sign_violations: total.div_sign,
        curvature_bound_violations: total.bound,
        tangential_trace_violations: total.trace,
        first_violations: first,
    }
}

impl ConeReport {
    pub fn inequality_violations(&self) -> usize {
        self.divergence_sign_violations + self.curvature_bound_violations + self.tangential_trace_violations
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concave_bowl_is_in_the_cone() {
        let f = ScalarField4::centered_cube(9, 1.0, |x| -0.5 * x.iter().map(|v| v * v).sum::<f64>()).unwrap();
        let r = cone_check(&f, 0.0);
        assert_eq!(r.interior_cells, 5usize.pow(4));
        assert_eq!(r.in_positive_cone, r.interior_cells);
        assert_eq!(r.inequality_violations(), 0);
    }

    #[test]
    fn convex_bowl_is_not() {
        let f = ScalarField4::centered_cube(9, 1.0, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>()).unwrap();
        let r = cone_check(&f, 0.0);
        assert_eq!(r.in_positive_cone, 0);
        assert_eq!(r.first_violations.len(), MAX_LISTED);
    }
}
