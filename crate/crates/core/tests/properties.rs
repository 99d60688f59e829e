use nalgebra::Matrix4;
use proptest::prelude::*;

use sigma2lab::field::{assemble_a, frame_decompose, frame_decompose_with_tangent, scaling_check, Jet2, ScalarField4};
use sigma2lab::mass::binning::{cell_fraction_above, cube_fraction_below, cube_fraction_density};
use sigma2lab::symm::{cone_status, dot4, newton_tensors, SymMat3, SymMat4};

fn sym4(bound: f64) -> impl Strategy<Value = SymMat4> {
    prop::array::uniform10(-bound..bound).prop_map(SymMat4::from_upper)
}

fn vec4(bound: f64) -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-bound..bound)
}

fn jet() -> impl Strategy<Value = Jet2> {
    (vec4(2.0), -1.0..1.0f64, vec4(2.0), sym4(2.0))
        .prop_map(|(point, value, gradient, hessian)| Jet2 { point, value, gradient, hessian })
}

/// Eigenvalues from nalgebra, independent of the library's Jacobi sweeps.
fn oracle_eigenvalues(m: &SymMat4) -> [f64; 4] {
    let d = m.to_dense();
    let e = Matrix4::from_fn(|i, j| d[i][j]).symmetric_eigen().eigenvalues;
    [e[0], e[1], e[2], e[3]]
}

fn elementary(l: &[f64], k: usize) -> f64 {
    (0u32..1 << l.len())
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..l.len()).filter(|i| m >> i & 1 == 1).map(|i| l[i]).product::<f64>())
        .sum()
}

fn orthonormal_tangent(nu: [f64; 4], raw: [[f64; 4]; 3]) -> Option<[[f64; 4]; 3]> {
    let mut basis = vec![nu];
    for v in raw {
        let mut w = v;
        for b in &basis {
            let c = dot4(w, *b);
            for i in 0..4 {
                w[i] -= c * b[i];
            }
        }
        let n = dot4(w, w).sqrt();
        if n < 1e-3 {
            return None;
        }
        basis.push(w.map(|x| x / n));
    }
    Some([basis[1], basis[2], basis[3]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sigma_k_matches_eigenvalue_oracle(m in sym4(2.5)) {
        let l = oracle_eigenvalues(&m);
        let scale = m.frobenius_norm().max(1.0);
        for k in 1..=4 {
            let want = elementary(&l, k);
            let got = m.sigma(k).unwrap();
            prop_assert!((got - want).abs() <= 1e-9 * scale.powi(k as i32), "k={k}: {got} vs {want}");
        }
        let mut mine = m.eigenvalues().unwrap();
        let mut theirs = l;
        mine.sort_by(f64::total_cmp);
        theirs.sort_by(f64::total_cmp);
        for i in 0..4 {
            prop_assert!((mine[i] - theirs[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn eigen_reconstruction(m in sym4(3.0)) {
        let (vals, vecs) = m.eigen().unwrap();
        let d = m.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                let r: f64 = (0..4).map(|k| vecs[k][i] * vals[k] * vecs[k][j]).sum();
                prop_assert!((r - d[i][j]).abs() <= 1e-12 * m.frobenius_norm().max(1.0));
            }
        }
    }

    #[test]
    fn sigma_k_is_homogeneous(m in sym4(2.0), c in -3.0..3.0f64) {
        for k in 1..=4 {
            let lhs = m.scale(c).sigma(k).unwrap();
            let rhs = c.powi(k as i32) * m.sigma(k).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn newton_maclaurin(m in sym4(3.0), d in prop::array::uniform6(-3.0..3.0f64)) {
        let s1 = m.sigma1();
        prop_assert!(m.sigma2() <= 0.375 * s1 * s1 + 1e-12);
        let mut t = SymMat3::zero();
        let mut n = 0;
        for i in 0..3 {
            for j in i..3 {
                t.set(i, j, d[n]);
                t.set(j, i, d[n]);
                n += 1;
            }
        }
        if t.trace() >= 0.0 {
            prop_assert!(t.sigma2() <= t.trace().powi(2) / 3.0 + 1e-12);
        }
    }

    #[test]
    fn negation_swaps_cones(m in sym4(2.0)) {
        let a = cone_status(&m);
        let b = cone_status(&m.scale(-1.0));
        prop_assert_eq!(a.in_positive, b.in_negative);
        prop_assert_eq!(a.in_negative, b.in_positive);
        prop_assert_eq!(a.on_boundary, b.on_boundary);
    }

    #[test]
    fn newton_tensor_contractions(h in sym4(2.0)) {
        let (t1, t2) = newton_tensors(&h);
        let s2 = h.scale(-1.0).sigma2();
        prop_assert!((-t1.frobenius_dot(&h) - 2.0 * s2).abs() <= 1e-10 * (1.0 + s2.abs()));
        prop_assert!((t2.trace() - 2.0 * s2).abs() <= 1e-10 * (1.0 + s2.abs()));
    }

    #[test]
    fn scaling_laws_of_a(j in jet(), rho in -2.0..2.0f64, a in 0.2..3.0f64, b in -5.0..5.0f64) {
        let r = scaling_check(&j, rho, a, b);
        let scale = 1.0 + assemble_a(&j, rho).max_abs() * a * a;
        prop_assert!(r.max() <= 1e-12 * scale, "{r:?}");
    }

    #[test]
    fn frame_quantities_are_rotation_invariant(
        j in jet(),
        rho in -1.5..1.5f64,
        raw in prop::array::uniform3(vec4(1.0)),
    ) {
        prop_assume!(j.grad_norm_sq() > 1e-2);
        let fd = frame_decompose(&j, rho, 1e-8).unwrap();
        let Some(tangent) = orthonormal_tangent(fd.nu, raw) else { return Ok(()) };
        let rot = frame_decompose_with_tangent(&j, rho, 1e-8, tangent).unwrap();
        let tol = 1e-9 * (1.0 + assemble_a(&j, rho).frobenius_norm().powi(2));
        prop_assert!((fd.mean_curvature - rot.mean_curvature).abs() <= tol);
        prop_assert!((fd.sigma1_tangential() - rot.sigma1_tangential()).abs() <= tol);
        prop_assert!((fd.a_tilde.sigma2() - rot.a_tilde.sigma2()).abs() <= tol);
        prop_assert!((fd.u_nn - rot.u_nn).abs() <= tol);
        let s2 = assemble_a(&j, rho).sigma2();
        prop_assert!((rot.reassemble().sigma2() - s2).abs() <= tol);
    }

    #[test]
    fn cube_fraction_is_a_distribution(a in vec4(2.0), d in -3.0..3.0f64) {
        let lo = cube_fraction_below(d, a);
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!((lo + cube_fraction_below(-d, a) - 1.0).abs() <= 1e-9);
        prop_assert!(cube_fraction_below(d + 0.1, a) >= lo - 1e-12);
        let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if a.iter().all(|x| x.abs() > 0.05 * amax) && amax > 0.1 {
            let h = 1e-5;
            let fd = (cube_fraction_below(d + h, a) - cube_fraction_below(d - h, a)) / (2.0 * h);
            prop_assert!((fd - cube_fraction_density(d, a)).abs() <= 1e-4 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn cell_fraction_decreases_with_level(j in jet(), t in -2.0..2.0f64) {
        let sp = [0.1; 4];
        let a = cell_fraction_above(&j, sp, t);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(cell_fraction_above(&j, sp, t + 0.05) <= a + 1e-12);
    }

    #[test]
    fn blob_round_trip(
        ext in prop::array::uniform4(5usize..7),
        sp in prop::array::uniform4(0.05..1.0f64),
        origin in vec4(3.0),
        seed in any::<u64>(),
    ) {
        let n: usize = ext.iter().product();
        let data: Vec<f64> = (0..n as u64).map(|i| ((i ^ seed).wrapping_mul(0x9E3779B97F4A7C15) >> 11) as f64 * 1e-12).collect();
        let f = ScalarField4::new(ext, sp, origin, data).unwrap();
        let mut buf = Vec::new();
        f.write_blob(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 16 + 32 + 32 + 32 + 8 * n);
        let g = ScalarField4::read_blob(buf.as_slice()).unwrap();
        prop_assert_eq!(f.extent, g.extent);
        prop_assert_eq!(f.spacing, g.spacing);
        prop_assert_eq!(f.origin, g.origin);
        prop_assert_eq!(f.data, g.data);
    }
}
