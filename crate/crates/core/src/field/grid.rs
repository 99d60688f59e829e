use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::symm::{newton_tensors, SymMat4};

use super::Jet2;

/// Cells a point must keep from every face for centered jets.
pub const JET_MARGIN: usize = 2;
/// Cells a point must keep from every face for differences of jets.
pub const NESTED_MARGIN: usize = 3;

const MAGIC: &[u8; 8] = b"S2LABFLD";
const FORMAT_VERSION: u32 = 1;

/// Samples of a scalar field on a regular grid in R^4. The last axis varies
/// fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField4 {
    pub extent: [usize; 4],
    pub spacing: [f64; 4],
    pub origin: [f64; 4],
    pub data: Vec<f64>,
}

impl ScalarField4 {
    pub fn new(extent: [usize; 4], spacing: [f64; 4], origin: [f64; 4], data: Vec<f64>) -> Result<Self> {
        if extent.iter().any(|&n| n < 5) {
            return Err(Error::Invalid("every grid extent must be at least 5".into()));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Invalid("grid spacing must be positive".into()));
        }
        let len: usize = extent.iter().product();
        if data.len() != len {
            return Err(Error::Invalid(format!("expected {len} samples, got {}", data.len())));
        }
        Ok(Self { extent, spacing, origin, data })
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(extent: [usize; 4], spacing: [f64; 4], origin: [f64; 4], f: F) -> Result<Self>
    where
        F: Fn([f64; 4]) -> f64 + Sync,
    {
        let len: usize = extent.iter().product();
        let probe = Self { extent, spacing, origin, data: Vec::new() };
        let data: Vec<f64> = (0..len).into_par_iter().map(|l| f(probe.point(probe.unravel(l)))).collect();
        Self::new(extent, spacing, origin, data)
    }

    /// `n^4` nodes covering `[-half_width, half_width]^4`.
    pub fn centered_cube<F>(n: usize, half_width: f64, f: F) -> Result<Self>
    where
        F: Fn([f64; 4]) -> f64 + Sync,
    {
        let h = 2.0 * half_width / (n as f64 - 1.0);
        Self::from_fn([n; 4], [h; 4], [-half_width; 4], f)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn linear(&self, idx: [usize; 4]) -> usize {
        ((idx[0] * self.extent[1] + idx[1]) * self.extent[2] + idx[2]) * self.extent[3] + idx[3]
    }

    #[inline]
    pub fn unravel(&self, mut l: usize) -> [usize; 4] {
        let mut idx = [0; 4];
        for k in (0..4).rev() {
            idx[k] = l % self.extent[k];
            l /= self.extent[k];
        }
        idx
    }

    #[inline]
    pub fn point(&self, idx: [usize; 4]) -> [f64; 4] {
        std::array::from_fn(|k| self.origin[k] + idx[k] as f64 * self.spacing[k])
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> f64 {
        self.data[self.linear(idx)]
    }

    #[inline]
    fn at_offset(&self, idx: [usize; 4], off: [isize; 4]) -> f64 {
        let j: [usize; 4] = std::array::from_fn(|k| (idx[k] as isize + off[k]) as usize);
        self.at(j)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn is_interior(&self, idx: [usize; 4], margin: usize) -> bool {
        (0..4).all(|k| idx[k] >= margin && idx[k] + margin < self.extent[k])
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }

    /// `max - min` over all samples.
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self.min_max();
        hi - lo
    }

    /// `max |u(i + e_k) - u(i)| / h_k` over all neighbouring node pairs.
    pub fn max_difference_slope(&self) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|l| {
                let idx = self.unravel(l);
                let mut m = 0.0f64;
                for k in 0..4 {
                    if idx[k] + 1 < self.extent[k] {
                        m = m.max((self.at(Self::neighbour(idx, k, true)) - self.data[l]).abs() / self.spacing[k]);
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Bound on `|u - u(idx)|` over the cell around `idx`:
    /// `0.75 sum_k h_k max(|D_k^+ u|, |D_k^- u|)`.
    pub fn local_reach(&self, idx: [usize; 4]) -> f64 {
        let u0 = self.at(idx);
        let mut r = 0.0;
        for k in 0..4 {
            let mut d = 0.0f64;
            if idx[k] + 1 < self.extent[k] {
                d = d.max((self.at(Self::neighbour(idx, k, true)) - u0).abs());
            }
            if idx[k] > 0 {
                d = d.max((self.at(Self::neighbour(idx, k, false)) - u0).abs());
            }
            r += 0.75 * d;
        }
        r
    }

    /// Critical-point floor for `|du|`: `1e-8 * oscillation / h`.
    pub fn gradient_floor(&self) -> f64 {
        let h = self.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        1e-8 * self.oscillation() / h
    }

    /// Second-order centered jet at a node at least [`JET_MARGIN`] cells from
    /// every face.
    pub fn jet_at(&self, idx: [usize; 4]) -> Result<Jet2> {
        if !self.is_interior(idx, JET_MARGIN) {
            return Err(Error::NotInterior { idx, margin: JET_MARGIN });
        }
        Ok(self.jet_unchecked(idx, 1))
    }

    /// Centered jet using neighbours `stride` cells away (effective spacing
    /// `stride * h`). Used for Richardson error estimates.
    pub fn jet_at_stride(&self, idx: [usize; 4], stride: usize) -> Result<Jet2> {
        let margin = JET_MARGIN * stride;
        if stride == 0 || !self.is_interior(idx, margin) {
            return Err(Error::NotInterior { idx, margin });
        }
        Ok(self.jet_unchecked(idx, stride))
    }

    pub(crate) fn jet_unchecked(&self, idx: [usize; 4], stride: usize) -> Jet2 {
        let s = stride as isize;
        let u0 = self.at(idx);
        let mut g = [0.0; 4];
        let mut hess = SymMat4::zero();
        for i in 0..4 {
            let hi = self.spacing[i] * stride as f64;
            let mut e = [0isize; 4];
            e[i] = s;
            let up = self.at_offset(idx, e);
            let um = self.at_offset(idx, e.map(|x| -x));
            g[i] = (up - um) / (2.0 * hi);
            hess.set(i, i, (up - 2.0 * u0 + um) / (hi * hi));
            for j in (i + 1)..4 {
                let hj = self.spacing[j] * stride as f64;
                let mut pp = [0isize; 4];
                pp[i] = s;
                pp[j] = s;
                let mut pm = pp;
                pm[j] = -s;
                let mut mp = pp;
                mp[i] = -s;
                let mm = pp.map(|x| -x);
                let v = (self.at_offset(idx, pp) - self.at_offset(idx, pm) - self.at_offset(idx, mp) + self.at_offset(idx, mm))
                    / (4.0 * hi * hj);
                hess.set(i, j, v);
            }
        }
        Jet2 { point: self.point(idx), value: u0, gradient: g, hessian: hess }
    }

    fn neighbour(idx: [usize; 4], axis: usize, plus: bool) -> [usize; 4] {
        let mut j = idx;
        if plus {
            j[axis] += 1;
        } else {
            j[axis] -= 1;
        }
        j
    }

    /// `|sigma_2(A) + div(W)/2|` with `div W` from centered differences of
    /// the flux assembled at neighbouring nodes. Converges at second order.
    pub fn divergence_residual(&self, idx: [usize; 4], rho: f64) -> Result<f64> {
        if !self.is_interior(idx, NESTED_MARGIN) {
            return Err(Error::NotInterior { idx, margin: NESTED_MARGIN });
        }
        let mut div_w = 0.0;
        for i in 0..4 {
            let wp = self.jet_unchecked(Self::neighbour(idx, i, true), 1).flux_w(rho);
            let wm = self.jet_unchecked(Self::neighbour(idx, i, false), 1).flux_w(rho);
            div_w += (wp[i] - wm[i]) / (2.0 * self.spacing[i]);
        }
        let sigma2 = super::assemble_a(&self.jet_unchecked(idx, 1), rho).sigma2();
        Ok((sigma2 + 0.5 * div_w).abs())
    }

    /// Row-wise divergence of the Newton tensors by nested differences.
    pub fn newton_divergence_residual(&self, idx: [usize; 4]) -> Result<f64> {
        if !self.is_interior(idx, NESTED_MARGIN) {
            return Err(Error::NotInterior { idx, margin: NESTED_MARGIN });
        }
        let mut d1 = [0.0; 4];
        let mut d2 = [0.0; 4];
        for j in 0..4 {
            let (p1, p2) = newton_tensors(&self.jet_unchecked(Self::neighbour(idx, j, true), 1).hessian);
            let (m1, m2) = newton_tensors(&self.jet_unchecked(Self::neighbour(idx, j, false), 1).hessian);
            for i in 0..4 {
                d1[i] += (p1.get(i, j) - m1.get(i, j)) / (2.0 * self.spacing[j]);
                d2[i] += (p2.get(i, j) - m2.get(i, j)) / (2.0 * self.spacing[j]);
            }
        }
        Ok(d1.iter().chain(&d2).fold(0.0f64, |m, x| m.max(x.abs())))
    }

    /// Multilinear interpolation; `None` outside the sampled box.
    pub fn interpolate(&self, x: [f64; 4]) -> Option<f64> {
        self.interpolate_with(x, 0, |idx| self.at(idx))
    }

    /// Gradient at `x` from multilinear interpolation of nodal centered
    /// differences; `None` unless the enclosing cell is one cell inside.
    pub fn interpolate_gradient(&self, x: [f64; 4]) -> Option<[f64; 4]> {
        let mut g = [0.0; 4];
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = self.interpolate_with(x, 1, |idx| {
                (self.at(Self::neighbour(idx, k, true)) - self.at(Self::neighbour(idx, k, false))) / (2.0 * self.spacing[k])
            })?;
        }
        Some(g)
    }

    fn interpolate_with(&self, x: [f64; 4], margin: usize, f: impl Fn([usize; 4]) -> f64) -> Option<f64> {
        let mut base = [0usize; 4];
        let mut frac = [0.0; 4];
        for k in 0..4 {
            let y = (x[k] - self.origin[k]) / self.spacing[k];
            let lo = margin as f64;
            let hi = (self.extent[k] - 1 - margin) as f64;
            if !(y >= lo && y <= hi) || hi <= lo {
                return None;
            }
            let b = (y.floor() as usize).min(self.extent[k] - 2 - margin);
            base[k] = b;
            frac[k] = y - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..16usize {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..4 {
                if corner >> k & 1 == 1 {
                    idx[k] += 1;
                    w *= frac[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * f(idx);
            }
        }
        Some(acc)
    }

    /// Writes the field blob: 16-byte header (magic, version, reserved),
    /// extents as `u64`, spacing and origin as `f64`, then the samples, all
    /// little-endian.
    pub fn write_blob<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for n in self.extent {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in self.spacing.iter().chain(&self.origin).chain(&self.data) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_blob<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header).map_err(|_| Error::Format("truncated header".into()))?;
        if &header[..8] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut buf8 = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut buf8).map_err(|_| Error::Format("truncated body".into()))?;
            Ok(buf8)
        };
        let mut extent = [0usize; 4];
        for e in extent.iter_mut() {
            let n = u64::from_le_bytes(next(&mut r)?);
            *e = usize::try_from(n).map_err(|_| Error::Format("extent overflow".into()))?;
        }
        let mut spacing = [0.0; 4];
        let mut origin = [0.0; 4];
        for v in spacing.iter_mut().chain(origin.iter_mut()) {
            *v = f64::from_le_bytes(next(&mut r)?);
        }
        let len = extent
            .iter()
            .try_fold(1usize, |a, &n| a.checked_mul(n))
            .ok_or_else(|| Error::Format("extent overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 8 {
            return Err(Error::Format(format!("expected {} sample bytes, found {}", len * 8, bytes.len())));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(extent, spacing, origin, data).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_blob(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_blob(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_field() -> ScalarField4 {
        ScalarField4::centered_cube(9, 1.0, |x| 0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]) + x[2] * x[3] - x[0]).unwrap()
    }

    #[test]
    fn quadratic_jets_are_exact() {
        let f = quad_field();
        let j = f.jet_at([4, 5, 3, 4]).unwrap();
        let x = j.point;
        assert!((j.gradient[0] - (x[0] - 1.0)).abs() < 1e-13);
        assert!((j.gradient[1] - 2.0 * x[1]).abs() < 1e-13);
        assert!((j.hessian.get(1, 1) - 2.0).abs() < 1e-12);
        assert!((j.hessian.get(2, 3) - 1.0).abs() < 1e-12);
        assert!(j.hessian.get(0, 2).abs() < 1e-12);
    }

    #[test]
    fn boundary_jet_rejected() {
        let f = quad_field();
        assert!(matches!(f.jet_at([1, 4, 4, 4]), Err(Error::NotInterior { .. })));
        assert!(f.divergence_residual([2, 4, 4, 4], 0.5).is_err());
    }

    #[test]
    fn blob_round_trip() {
        let f = quad_field();
        let mut buf = Vec::new();
        f.write_blob(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let g = ScalarField4::read_blob(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        buf.truncate(buf.len() - 3);
        assert!(matches!(ScalarField4::read_blob(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn interpolation_reproduces_linear() {
        let f = ScalarField4::centered_cube(5, 1.0, |x| 1.0 + x[0] - 2.0 * x[3]).unwrap();
        let v = f.interpolate([0.1, -0.3, 0.77, 0.25]).unwrap();
        assert!((v - (1.0 + 0.1 - 0.5)).abs() < 1e-14);
        assert!(f.interpolate([1.1, 0.0, 0.0, 0.0]).is_none());
        let g = f.interpolate_gradient([0.1, -0.3, 0.2, 0.25]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-13 && (g[3] + 2.0).abs() < 1e-13);
    }
}
