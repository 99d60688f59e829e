//! Symmetric 4x4 and 3x3 matrices, elementary symmetric functions of their
//! eigenvalues, the Garding cone test and the Newton tensors of a Hessian.
//!
//! The elementary symmetric functions are evaluated as sums of principal
//! minors, so they never touch an eigen-decomposition. The cyclic Jacobi
//! solver is kept as an independent oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative band around the cone boundary `sigma_2 = 0`, applied to the
/// Frobenius-normalized matrix.
pub const CONE_BOUNDARY_BAND: f64 = 1e-12;

/// Sweep cap for the cyclic Jacobi solver.
pub const JACOBI_MAX_SWEEPS: usize = 30;

#[inline]
const fn upper_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (7 - i) / 2 + j
}

/// Real symmetric 4x4 matrix stored as its 10 upper-triangular entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMat4 {
    a: [f64; 10],
}

impl Default for SymMat4 {
    fn default() -> Self {
        Self::zero()
    }
}

impl SymMat4 {
    pub const fn zero() -> Self {
        Self { a: [0.0; 10] }
    }

    pub fn identity() -> Self {
        Self::diag([1.0; 4])
    }

    pub fn diag(d: [f64; 4]) -> Self {
        let mut m = Self::zero();
        for (i, di) in d.into_iter().enumerate() {
            m.set(i, i, di);
        }
        m
    }

    /// Upper-triangular entries in row-major order:
    /// (0,0) (0,1) (0,2) (0,3) (1,1) (1,2) (1,3) (2,2) (2,3) (3,3).
    pub fn from_upper(a: [f64; 10]) -> Self {
        Self { a }
    }

    pub fn upper(&self) -> [f64; 10] {
        self.a
    }

    /// Symmetrizes `(m + m^T) / 2`.
    pub fn from_dense(m: [[f64; 4]; 4]) -> Self {
        let mut s = Self::zero();
        for i in 0..4 {
            for j in i..4 {
                s.set(i, j, 0.5 * (m[i][j] + m[j][i]));
            }
        }
        s
    }

    /// `v v^T`
    pub fn outer(v: [f64; 4]) -> Self {
        let mut s = Self::zero();
        for i in 0..4 {
            for j in i..4 {
                s.set(i, j, v[i] * v[j]);
            }
        }
        s
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[upper_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[upper_index(i, j)] = v;
    }

    pub fn to_dense(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.get(i, j);
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        self.a[0] + self.a[4] + self.a[7] + self.a[9]
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { a: self.a.map(|x| c * x) }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut a = self.a;
        for (x, y) in a.iter_mut().zip(o.a) {
            *x += y;
        }
        Self { a }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn add_identity(&self, c: f64) -> Self {
        let mut m = *self;
        for i in 0..4 {
            m.set(i, i, m.get(i, i) + c);
        }
        m
    }

    pub fn mul_vec(&self, v: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.get(i, j) * v[j]).sum();
        }
        out
    }

    /// Dense product `self * o` (not symmetric in general).
    pub fn matmul(&self, o: &Self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (0..4).map(|k| self.get(i, k) * o.get(k, j)).sum();
            }
        }
        m
    }

    /// Frobenius inner product `self : o`.
    pub fn frobenius_dot(&self, o: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += self.get(i, j) * o.get(i, j);
            }
        }
        s
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `E^T M E` for a matrix whose columns are given by `cols`.
    pub fn congruence(&self, cols: &[[f64; 4]; 4]) -> Self {
        let mut s = Self::zero();
        for i in 0..4 {
            let mi = self.mul_vec(cols[i]);
            for j in i..4 {
                s.set(i, j, dot4(cols[j], mi));
            }
        }
        s
    }

    pub fn sigma1(&self) -> f64 {
        self.trace()
    }

    /// Sum of the 2x2 principal minors.
    pub fn sigma2(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let aij = self.get(i, j);
                s += self.get(i, i) * self.get(j, j) - aij * aij;
            }
        }
        s
    }

    /// Sum of the 3x3 principal minors.
    pub fn sigma3(&self) -> f64 {
        let mut s = 0.0;
        for skip in 0..4 {
            let idx: Vec<usize> = (0..4).filter(|&k| k != skip).collect();
            s += det3(|r, c| self.get(idx[r], idx[c]));
        }
        s
    }

    /// Determinant by Laplace expansion along the first two rows.
    pub fn sigma4(&self) -> f64 {
        let m = |i, j| self.get(i, j);
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let mut det = 0.0;
        for &(a, b) in &pairs {
            let (c, d) = complement(a, b);
            let top = m(0, a) * m(1, b) - m(0, b) * m(1, a);
            let bottom = m(2, c) * m(3, d) - m(2, d) * m(3, c);
            let sign = if (a + b + 1) % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * top * bottom;
        }
        det
    }

    /// `sigma_k` for k in 1..=4.
    pub fn sigma(&self, k: usize) -> Result<f64> {
        match k {
            1 => Ok(self.sigma1()),
            2 => Ok(self.sigma2()),
            3 => Ok(self.sigma3()),
            4 => Ok(self.sigma4()),
            _ => Err(Error::InvalidOrder(k)),
        }
    }

    /// Eigenvalues in ascending order; row `k` of the second array is the
    /// unit eigenvector for eigenvalue `k`.
    pub fn eigen(&self) -> Result<([f64; 4], [[f64; 4]; 4])> {
        jacobi_eigen(self.to_dense(), JACOBI_MAX_SWEEPS)
    }

    pub fn eigenvalues(&self) -> Result<[f64; 4]> {
        Ok(self.eigen()?.0)
    }
}

fn complement(a: usize, b: usize) -> (usize, usize) {
    let mut rest = (0..4).filter(|&k| k != a && k != b);
    (rest.next().unwrap(), rest.next().unwrap())
}

fn det3(m: impl Fn(usize, usize) -> f64) -> f64 {
    m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
}

#[inline]
pub fn dot4(a: [f64; 4], b: [f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub fn norm4(a: [f64; 4]) -> f64 {
    dot4(a, a).sqrt()
}

/// Real symmetric 3x3 matrix, used for tangential blocks on level sets.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SymMat3 {
    a: [f64; 6],
}

impl SymMat3 {
    #[inline]
    const fn idx(i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * (5 - i) / 2 + j
    }

    pub fn zero() -> Self {
        Self { a: [0.0; 6] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[Self::idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[Self::idx(i, j)] = v;
    }

    pub fn to_dense(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.get(i, j);
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        self.get(0, 0) + self.get(1, 1) + self.get(2, 2)
    }

    pub fn sigma2(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in (i + 1)..3 {
                s += self.get(i, i) * self.get(j, j) - self.get(i, j).powi(2);
            }
        }
        s
    }

    pub fn det(&self) -> f64 {
        det3(|r, c| self.get(r, c))
    }

    pub fn eigenvalues(&self) -> Result<[f64; 3]> {
        Ok(jacobi_eigen(self.to_dense(), JACOBI_MAX_SWEEPS)?.0)
    }
}

/// Cyclic Jacobi eigen-solver. Returns ascending eigenvalues and the matching
/// eigenvectors as rows.
pub fn jacobi_eigen<const N: usize>(mut a: [[f64; N]; N], max_sweeps: usize) -> Result<([f64; N], [[f64; N]; N])> {
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let total: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &[[f64; N]; N]| -> f64 {
        let mut s = 0.0;
        for i in 0..N {
            for j in (i + 1)..N {
                s += 2.0 * a[i][j] * a[i][j];
            }
        }
        s.sqrt()
    };
    let mut converged = total == 0.0;
    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        if off(&a) <= 1e-15 * total {
            converged = true;
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    if !converged && off(&a) > 1e-15 * total {
        return Err(Error::EigenNoConvergence { sweeps: max_sweeps, off_norm: off(&a) });
    }
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let mut vals = [0.0; N];
    let mut vecs = [[0.0; N]; N];
    for (slot, &k) in order.iter().enumerate() {
        vals[slot] = a[k][k];
        for r in 0..N {
            vecs[slot][r] = v[r][k];
        }
    }
    Ok((vals, vecs))
}

/// Position of a symmetric matrix relative to the Garding cones
/// `Gamma_2^+ = {sigma_1 > 0, sigma_2 > 0}` and `Gamma_2^- = -Gamma_2^+`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeStatus {
    pub sigma1: f64,
    pub sigma2: f64,
    pub in_positive: bool,
    pub in_negative: bool,
    pub on_boundary: bool,
}

pub fn cone_status(m: &SymMat4) -> ConeStatus {
    let sigma1 = m.sigma1();
    let sigma2 = m.sigma2();
    let norm = m.frobenius_norm();
    let normalized = if norm > 0.0 { sigma2 / (norm * norm) } else { 0.0 };
    let on_boundary = norm > 0.0 && normalized.abs() <= CONE_BOUNDARY_BAND;
    let interior = normalized > CONE_BOUNDARY_BAND;
    ConeStatus {
        sigma1,
        sigma2,
        in_positive: interior && sigma1 > 0.0,
        in_negative: interior && sigma1 < 0.0,
        on_boundary,
    }
}

/// Newton tensors of a Hessian `H`:
/// `T1 = -tr(H) I + H`, `T2 = H T1 + sigma_2(-H) I`.
pub fn newton_tensors(h: &SymMat4) -> (SymMat4, SymMat4) {
    let t1 = h.add_identity(-h.trace());
    let ht1 = SymMat4::from_dense(h.matmul(&t1));
    let t2 = ht1.add_identity(h.scale(-1.0).sigma2());
    (t1, t2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_sigmas() {
        let i = SymMat4::identity();
        assert_eq!(i.sigma1(), 4.0);
        assert_eq!(i.sigma2(), 6.0);
        assert_eq!(i.sigma3(), 4.0);
        assert_eq!(i.sigma4(), 1.0);
        assert!(cone_status(&i).in_positive);
    }

    #[test]
    fn diag_sigma2() {
        let m = SymMat4::diag([1.0, 1.0, 1.0, -1.0]);
        assert_eq!(m.sigma2(), 0.0);
        let st = cone_status(&m);
        assert!(st.on_boundary && !st.in_positive && !st.in_negative);
        assert_eq!(st.sigma1, 2.0);
    }

    #[test]
    fn negative_identity_in_negative_cone() {
        let st = cone_status(&SymMat4::identity().scale(-1.0));
        assert!(st.in_negative && !st.in_positive);
    }

    #[test]
    fn sigma_order_checked() {
        assert!(matches!(SymMat4::identity().sigma(5), Err(Error::InvalidOrder(5))));
        assert!(SymMat4::identity().sigma(0).is_err());
    }

    #[test]
    fn newton_of_identity() {
        let (t1, t2) = newton_tensors(&SymMat4::identity());
        assert_eq!(t1, SymMat4::identity().scale(-3.0));
        assert_eq!(t2, SymMat4::identity().scale(3.0));
    }

    #[test]
    fn determinant_of_permutation_like() {
        let mut m = SymMat4::zero();
        m.set(0, 1, 1.0);
        m.set(2, 3, 1.0);
        assert_eq!(m.sigma4(), 1.0);
        let mut m = SymMat4::diag([2.0, 3.0, 5.0, 7.0]);
        assert_eq!(m.sigma4(), 210.0);
        m.set(0, 3, 1.0);
        // 3*5*(2*7-1)
        assert_eq!(m.sigma4(), 195.0);
    }

    #[test]
    fn symmat3_basics() {
        let mut m = SymMat3::zero();
        m.set(0, 0, 2.0);
        m.set(1, 1, 3.0);
        m.set(2, 2, 4.0);
        m.set(0, 2, 1.0);
        assert_eq!(m.trace(), 9.0);
        assert_eq!(m.sigma2(), 6.0 + 8.0 - 1.0 + 12.0);
        assert_eq!(m.det(), 2.0 * 12.0 - 3.0);
        let ev = m.eigenvalues().unwrap();
        assert!((ev.iter().sum::<f64>() - 9.0).abs() < 1e-13);
    }
}
