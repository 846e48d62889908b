//! Dense state vectors for small rings, used to verify the contractions.
//!
//! Basis ordering is site-major with site 0 slowest: the amplitude of
//! `|i_0 i_1 … i_{N-1}⟩` sits at `Σ_s i_s · d^(N-1-s)`.

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, C64};

use super::tensor::SiteTensor;

/// Largest Hilbert-space dimension stored densely (2^16 for qubits).
pub const DENSE_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_sites: usize,
    d: usize,
    amps: Vec<C64>,
}

pub(crate) fn hilbert_dim(d: usize, n_sites: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for _ in 0..n_sites {
        dim = dim.checked_mul(d).filter(|&x| x <= DENSE_LIMIT).ok_or(Error::DenseGuard { n_sites, d })?;
    }
    Ok(dim)
}

impl StateVector {
    pub fn zeros(d: usize, n_sites: usize) -> Result<Self> {
        let dim = hilbert_dim(d, n_sites)?;
        Ok(Self { n_sites, d, amps: vec![c64(0.0, 0.0); dim] })
    }

    pub fn from_amplitudes(d: usize, n_sites: usize, amps: Vec<C64>) -> Result<Self> {
        let dim = hilbert_dim(d, n_sites)?;
        if amps.len() != dim {
            return Err(Error::DimensionMismatch(format!("expected {dim} amplitudes, got {}", amps.len())));
        }
        Ok(Self { n_sites, d, amps })
    }

    /// Product basis state from per-site digits.
    pub fn basis(d: usize, digits: &[usize]) -> Result<Self> {
        let mut v = Self::zeros(d, digits.len())?;
        let idx = digits.iter().fold(0, |acc, &x| acc * d + x);
        v.amps[idx] = c64(1.0, 0.0);
        Ok(v)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn phys_dim(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.amps.len(), other.amps.len());
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scale(&mut self, s: C64) {
        self.amps.iter_mut().for_each(|z| *z *= s);
    }

    pub fn axpy(&mut self, s: C64, other: &Self) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += s * b;
        }
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.scale(c64(1.0 / n, 0.0));
        }
        self
    }

    fn stride(&self, site: usize) -> usize {
        self.d.pow((self.n_sites - 1 - site) as u32)
    }

    /// Translation by one site to the right:
    /// `T|i_0 i_1 … i_{N-1}⟩ = |i_{N-1} i_0 … i_{N-2}⟩`.
    pub fn translate(&self) -> Self {
        let mut out = vec![c64(0.0, 0.0); self.amps.len()];
        let top = self.stride(0);
        for (c, z) in self.amps.iter().enumerate() {
            let last = c % self.d;
            out[last * top + c / self.d] = *z;
        }
        Self { n_sites: self.n_sites, d: self.d, amps: out }
    }

    pub fn translate_by(&self, steps: usize) -> Self {
        (0..steps % self.n_sites.max(1)).fold(self.clone(), |v, _| v.translate())
    }

    pub fn apply_site(&self, op: &CMatrix, site: usize) -> Self {
        let stride = self.stride(site);
        let d = self.d;
        let mut out = vec![c64(0.0, 0.0); self.amps.len()];
        for (c, z) in self.amps.iter().enumerate() {
            if *z == c64(0.0, 0.0) {
                continue;
            }
            let i = (c / stride) % d;
            let base = c - i * stride;
            for ip in 0..d {
                let w = op[(ip, i)];
                if w != c64(0.0, 0.0) {
                    out[base + ip * stride] += w * z;
                }
            }
        }
        Self { n_sites: self.n_sites, d, amps: out }
    }

    /// Applies a `d²×d²` operator to sites `site` and `site+1 (mod N)`; the
    /// operator's row index is `i_site·d + i_next`.
    pub fn apply_two_site(&self, op: &CMatrix, site: usize) -> Self {
        let next = (site + 1) % self.n_sites;
        let (s1, s2) = (self.stride(site), self.stride(next));
        let d = self.d;
        let mut out = vec![c64(0.0, 0.0); self.amps.len()];
        for (c, z) in self.amps.iter().enumerate() {
            if *z == c64(0.0, 0.0) {
                continue;
            }
            let i = (c / s1) % d;
            let j = (c / s2) % d;
            let base = c - i * s1 - j * s2;
            for ip in 0..d {
                for jp in 0..d {
                    let w = op[(ip * d + jp, i * d + j)];
                    if w != c64(0.0, 0.0) {
                        out[base + ip * s1 + jp * s2] += w * z;
                    }
                }
            }
        }
        Self { n_sites: self.n_sites, d, amps: out }
    }

    /// `Π_j op_j |v⟩` with the same operator on every site.
    pub fn apply_product(&self, op: &CMatrix) -> Self {
        (0..self.n_sites).fold(self.clone(), |v, s| v.apply_site(op, s))
    }
}

fn trace_product(mats: &[CMatrix], digits: &[usize], first: Option<&[CMatrix]>) -> C64 {
    let mut prod = match first {
        Some(f) => f[digits[0]].clone(),
        None => mats[digits[0]].clone(),
    };
    for &i in &digits[1..] {
        prod = prod * &mats[i];
    }
    prod.trace()
}

fn for_each_config(d: usize, n: usize, mut f: impl FnMut(usize, &[usize])) {
    let total = d.pow(n as u32);
    let mut digits = vec![0usize; n];
    for c in 0..total {
        f(c, &digits);
        for s in (0..n).rev() {
            digits[s] += 1;
            if digits[s] < d {
                break;
            }
            digits[s] = 0;
        }
    }
}

/// `Σ Tr(A_{i_0} … A_{i_{N-1}}) |i_0 … i_{N-1}⟩`.
pub fn ti_mps_state_vector(a: &SiteTensor, n_sites: usize) -> Result<StateVector> {
    impurity_state_vector(a, a, n_sites)
}

/// `|φ_A(B)⟩ = Σ Tr(B_{i_0} A_{i_1} … A_{i_{N-1}}) |i_0 … i_{N-1}⟩`.
pub fn impurity_state_vector(a: &SiteTensor, b: &SiteTensor, n_sites: usize) -> Result<StateVector> {
    if a.phys_dim() != b.phys_dim() || a.bond_dim() != b.bond_dim() {
        return Err(Error::DimensionMismatch("A and B differ in shape".into()));
    }
    if n_sites == 0 {
        return Err(Error::Invalid("a ring needs at least one site".into()));
    }
    let d = a.phys_dim();
    let mut v = StateVector::zeros(d, n_sites)?;
    let am: Vec<CMatrix> = (0..d).map(|i| a.matrix(i)).collect();
    let bm: Vec<CMatrix> = (0..d).map(|i| b.matrix(i)).collect();
    for_each_config(d, n_sites, |c, digits| {
        v.amps[c] = trace_product(&am, digits, Some(&bm));
    });
    Ok(v)
}

/// Bloch state `N^{-1/2} Σ_n e^{i2πkn/N} T^n |φ_A(B)⟩`.
pub fn bloch_state_vector(a: &SiteTensor, b: &SiteTensor, k: usize, n_sites: usize) -> Result<StateVector> {
    if k >= n_sites {
        return Err(Error::OutOfRange(format!("momentum {k} must be below N={n_sites}")));
    }
    let phi = impurity_state_vector(a, b, n_sites)?;
    let mut out = StateVector::zeros(a.phys_dim(), n_sites)?;
    let mut shifted = phi;
    let norm = 1.0 / (n_sites as f64).sqrt();
    for n in 0..n_sites {
        let phase = 2.0 * std::f64::consts::PI * (k * n) as f64 / n_sites as f64;
        out.axpy(C64::from_polar(norm, phase), &shifted);
        shifted = shifted.translate();
    }
    Ok(out)
}
