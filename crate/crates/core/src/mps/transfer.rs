use crate::error::{Error, Result};
use crate::linalg::{c64, eig_general, solve, svd, CMatrix, C64};

use super::tensor::SiteTensor;

/// `E = Σ_i A_i ⊗ conj(A_i)`, or `E_O = Σ_ij O_ij A_j ⊗ conj(A_i)` with an
/// inserted single-site operator. Row index `α·D + α'`, column `β·D + β'`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix(pub CMatrix);

impl TransferMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `Tr(E^p)`.
    pub fn trace_power(&self, p: usize) -> C64 {
        matrix_power(&self.0, p).trace()
    }
}

pub fn transfer_matrix(a: &SiteTensor, op: Option<&CMatrix>) -> Result<TransferMatrix> {
    mixed_transfer(a, a, op)
}

/// `Σ_ij O_ij K_j ⊗ conj(B_i)` for ket tensor `K` and bra tensor `B`.
pub fn mixed_transfer(ket: &SiteTensor, bra: &SiteTensor, op: Option<&CMatrix>) -> Result<TransferMatrix> {
    if ket.phys_dim() != bra.phys_dim() || ket.bond_dim() != bra.bond_dim() {
        return Err(Error::DimensionMismatch("ket and bra tensors differ in shape".into()));
    }
    let ket = match op {
        Some(o) => ket.apply_physical(o)?,
        None => ket.clone(),
    };
    let d = ket.phys_dim();
    let dim = ket.bond_dim();
    let mut e = CMatrix::zeros(dim * dim, dim * dim);
    for i in 0..d {
        for a in 0..dim {
            for b in 0..dim {
                let k = ket.get(i, a, b);
                if k == c64(0.0, 0.0) {
                    continue;
                }
                for ap in 0..dim {
                    for bp in 0..dim {
                        e[(a * dim + ap, b * dim + bp)] += k * bra.get(i, ap, bp).conj();
                    }
                }
            }
        }
    }
    Ok(TransferMatrix(e))
}

pub fn matrix_power(m: &CMatrix, p: usize) -> CMatrix {
    let n = m.nrows();
    let mut result = CMatrix::identity(n, n);
    let mut base = m.clone();
    let mut e = p;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Consecutive powers `E^0 … E^max`.
#[derive(Debug, Clone)]
pub struct TransferPowers {
    powers: Vec<CMatrix>,
}

impl TransferPowers {
    pub fn new(e: &CMatrix, max: usize) -> Self {
        let n = e.nrows();
        let mut powers = Vec::with_capacity(max + 1);
        powers.push(CMatrix::identity(n, n));
        for p in 1..=max {
            let next = &powers[p - 1] * e;
            powers.push(next);
        }
        Self { powers }
    }

    pub fn get(&self, p: usize) -> &CMatrix {
        &self.powers[p]
    }

    pub fn max_power(&self) -> usize {
        self.powers.len() - 1
    }
}

/// Eigenvalue of `E` with largest magnitude.
pub fn dominant_eigenvalue(e: &TransferMatrix) -> Result<C64> {
    let eig = eig_general(e.matrix())?;
    Ok(eig.values[0])
}

/// Rescales `a` so that the dominant eigenvalue of its transfer matrix has
/// unit magnitude. Returns the tensor and the factor applied.
pub fn normalize_dominant(a: &SiteTensor) -> Result<(SiteTensor, f64)> {
    let lambda = dominant_eigenvalue(&transfer_matrix(a, None)?)?.norm();
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::DegenerateState { norm: lambda });
    }
    let factor = 1.0 / lambda.sqrt();
    Ok((a.scaled(c64(factor, 0.0)), factor))
}

#[derive(Debug, Clone)]
pub struct PowerApprox {
    pub matrix: CMatrix,
    /// Set when `E` was numerically defective and the exact power was used.
    pub fell_back: bool,
}

/// `E^p` from the `rank` eigenpairs of largest magnitude.
pub fn transfer_power_approx(e: &TransferMatrix, p: usize, rank: usize) -> Result<PowerApprox> {
    let n = e.dim();
    if rank == 0 || rank > n {
        return Err(Error::OutOfRange(format!("rank {rank} must lie in 1..={n}")));
    }
    if p == 0 {
        return Ok(PowerApprox { matrix: CMatrix::identity(n, n), fell_back: false });
    }
    let eig = eig_general(e.matrix())?;
    let sv = svd(&eig.vectors)?;
    let smax = sv.singular_values[0];
    let smin = *sv.singular_values.last().unwrap();
    if smin <= 1e-10 * smax {
        log::warn!("transfer matrix is numerically defective (cond {:.2e}); using the exact power", smax / smin);
        return Ok(PowerApprox { matrix: matrix_power(e.matrix(), p), fell_back: true });
    }
    let left = solve(&eig.vectors, &CMatrix::identity(n, n))?;
    let mut out = CMatrix::zeros(n, n);
    for j in 0..rank {
        let w = eig.values[j].powu(p as u32);
        let right = eig.vectors.column(j);
        let row = left.row(j);
        out += (right * row) * w;
    }
    Ok(PowerApprox { matrix: out, fell_back: false })
}
