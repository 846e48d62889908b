use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, CVector, C64};

/// Rank-3 site tensor `A[i]_{αβ}` of a translation-invariant MPS.
///
/// Storage is flat with `index = i·D² + α·D + β`; this is also the layout of
/// `vec(A)` used by every effective matrix in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    phys: usize,
    bond: usize,
    data: Vec<C64>,
}

impl SiteTensor {
    pub fn new(phys: usize, bond: usize, data: Vec<C64>) -> Result<Self> {
        if phys == 0 || bond == 0 {
            return Err(Error::Invalid(format!("site tensor dimensions must be positive (d={phys}, D={bond})")));
        }
        if data.len() != phys * bond * bond {
            return Err(Error::DimensionMismatch(format!(
                "site tensor with d={phys}, D={bond} needs {} entries, got {}",
                phys * bond * bond,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid("site tensor has non-finite entries".into()));
        }
        Ok(Self { phys, bond, data })
    }

    pub fn zeros(phys: usize, bond: usize) -> Self {
        Self { phys, bond, data: vec![c64(0.0, 0.0); phys * bond * bond] }
    }

    /// Builds the tensor from its `d` matrices `A_i`.
    pub fn from_matrices(mats: &[CMatrix]) -> Result<Self> {
        let bond = mats.first().map(|m| m.nrows()).unwrap_or(0);
        if mats.iter().any(|m| m.nrows() != bond || m.ncols() != bond) {
            return Err(Error::DimensionMismatch("site matrices must all be DxD".into()));
        }
        let mut data = Vec::with_capacity(mats.len() * bond * bond);
        for m in mats {
            for a in 0..bond {
                for b in 0..bond {
                    data.push(m[(a, b)]);
                }
            }
        }
        Self::new(mats.len(), bond, data)
    }

    pub fn from_vector(phys: usize, bond: usize, v: &CVector) -> Result<Self> {
        Self::new(phys, bond, v.iter().copied().collect())
    }

    /// Entries drawn from a complex standard Gaussian.
    pub fn random<R: Rng + ?Sized>(phys: usize, bond: usize, rng: &mut R) -> Self {
        let data = (0..phys * bond * bond)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect();
        Self { phys, bond, data }
    }

    /// Random tensor with real, symmetric matrices `A_i`.
    pub fn random_real_symmetric<R: Rng + ?Sized>(phys: usize, bond: usize, rng: &mut R) -> Self {
        let mut t = Self::zeros(phys, bond);
        for i in 0..phys {
            for a in 0..bond {
                for b in a..bond {
                    let x: f64 = rng.sample(StandardNormal);
                    t.set(i, a, b, c64(x, 0.0));
                    t.set(i, b, a, c64(x, 0.0));
                }
            }
        }
        t
    }

    pub fn phys_dim(&self) -> usize {
        self.phys
    }

    pub fn bond_dim(&self) -> usize {
        self.bond
    }

    /// `d·D²`, the length of `vec(A)`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, a: usize, b: usize) -> C64 {
        self.data[(i * self.bond + a) * self.bond + b]
    }

    #[inline]
    pub fn set(&mut self, i: usize, a: usize, b: usize, z: C64) {
        self.data[(i * self.bond + a) * self.bond + b] = z;
    }

    pub fn matrix(&self, i: usize) -> CMatrix {
        CMatrix::from_fn(self.bond, self.bond, |a, b| self.get(i, a, b))
    }

    pub fn to_vector(&self) -> CVector {
        CVector::from_column_slice(&self.data)
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { phys: self.phys, bond: self.bond, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `Ã_i = Σ_j op_ij A_j`.
    pub fn apply_physical(&self, op: &CMatrix) -> Result<Self> {
        self.check_op(op)?;
        let dd = self.bond * self.bond;
        let mut out = Self::zeros(self.phys, self.bond);
        for i in 0..self.phys {
            for j in 0..self.phys {
                let w = op[(i, j)];
                if w == c64(0.0, 0.0) {
                    continue;
                }
                for x in 0..dd {
                    out.data[i * dd + x] += w * self.data[j * dd + x];
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn check_op(&self, op: &CMatrix) -> Result<()> {
        if op.nrows() != self.phys || op.ncols() != self.phys {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{} but physical dimension is {}",
                op.nrows(),
                op.ncols(),
                self.phys
            )));
        }
        Ok(())
    }

    /// SHA-256 over dimensions and the raw little-endian entries.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.phys as u64).to_le_bytes());
        hasher.update((self.bond as u64).to_le_bytes());
        for z in &self.data {
            hasher.update(z.re.to_le_bytes());
            hasher.update(z.im.to_le_bytes());
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_vec_convention() {
        let data: Vec<C64> = (0..2 * 9).map(|x| c64(x as f64, 0.0)).collect();
        let t = SiteTensor::new(2, 3, data).unwrap();
        assert_eq!(t.get(1, 2, 0), c64((9 + 2 * 3) as f64, 0.0));
        assert_eq!(t.matrix(0)[(1, 2)], c64(5.0, 0.0));
        let back = SiteTensor::from_matrices(&[t.matrix(0), t.matrix(1)]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SiteTensor::new(2, 2, vec![c64(0.0, 0.0); 7]).is_err());
        assert!(SiteTensor::new(0, 2, vec![]).is_err());
        assert!(SiteTensor::new(1, 1, vec![c64(f64::NAN, 0.0)]).is_err());
    }
}
