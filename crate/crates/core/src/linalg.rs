//! Dense complex linear algebra.
//!
//! Thin layer over `nalgebra` providing Hermitian eigendecomposition, SVD, a
//! general (non-Hermitian) eigendecomposition built on the complex Schur form,
//! and the cutoff-regularized generalized eigensolver used for the effective
//! momentum-sector problems.

use nalgebra::linalg::{Schur, SymmetricEigen, SVD};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative tolerance on negative metric eigenvalues.
pub const PSD_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = Complex { re: 1.0, im: 0.0 };
/// Convergence threshold for nalgebra's iterative decompositions. Its SVD
/// can stall on a wrong answer for rank-deficient input at exactly machine
/// epsilon, so this stays at the library default.
const ITER_EPS: f64 = 5.0 * f64::EPSILON;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |m_ij - conj(m_ji)|`.
pub fn asymmetry(m: &CMatrix) -> f64 {
    assert!(m.is_square());
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `max |m_ij - conj(m_ji)| / max |m_ij|`, zero for the zero matrix.
pub fn relative_asymmetry(m: &CMatrix) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    asymmetry(m) / scale
}

/// A dense matrix known to be Hermitian to within [`HERMITIAN_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, HERMITIAN_TOL)
    }

    pub fn with_tolerance(m: CMatrix, tolerance: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let asymmetry = relative_asymmetry(&m);
        if asymmetry > tolerance {
            return Err(Error::NotHermitian { asymmetry, tolerance });
        }
        Ok(Self(m))
    }

    /// Replaces `m` by `(m + m†)/2` and returns the asymmetry that was removed.
    pub fn hermitize(m: CMatrix) -> Result<(Self, f64)> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("cannot hermitize a non-square matrix".into()));
        }
        let asymmetry = relative_asymmetry(&m);
        let adj = m.adjoint();
        Ok((Self((m + adj) * c64(0.5, 0.0)), asymmetry))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(CMatrix::from_fn(n, n, |i, j| if i == j { c64(diag[i], 0.0) } else { ZERO }))
    }
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = self.values[j];
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_eig(m: &HermitianMatrix) -> Result<EigenSystem> {
    let n = m.dim();
    if n == 0 {
        return Ok(EigenSystem { values: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::try_new(m.matrix().clone(), ITER_EPS, 1000 * n.max(10))
        .ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem { values, vectors })
}

/// One solution of the regularized generalized problem `h v = E n v`.
#[derive(Debug, Clone)]
pub struct GevPair {
    pub value: f64,
    pub vector: CVector,
    /// `v† n v` after normalization.
    pub metric_norm: f64,
}

#[derive(Debug, Clone)]
pub struct GevSolution {
    /// Ascending by value.
    pub pairs: Vec<GevPair>,
    /// Number of metric directions at or below the cutoff.
    pub discarded: usize,
    pub metric_max: f64,
    pub cutoff: f64,
}

/// Solves `h v = E n v` on the subspace where `n` has eigenvalues strictly
/// above `eps * λ_max(n)`.
///
/// The kept block of `n` is whitened, so the reduced problem stays Hermitian.
/// Returned vectors satisfy `v_i† n v_j = δ_ij`.
pub fn gev_regularized(h: &HermitianMatrix, n: &HermitianMatrix, eps: f64) -> Result<GevSolution> {
    if h.dim() != n.dim() {
        return Err(Error::DimensionMismatch(format!(
            "h is {0}x{0} but n is {1}x{1}",
            h.dim(),
            n.dim()
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::Invalid(format!("cutoff eps must be non-negative, got {eps}")));
    }
    let metric = hermitian_eig(n)?;
    let largest = metric.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let lambda_max = metric.values.last().copied().unwrap_or(0.0);
    if let Some(&lowest) = metric.values.first() {
        if lowest < -PSD_TOL * largest {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: lowest, largest });
        }
    }
    let cutoff = eps * lambda_max;
    let kept: Vec<usize> = (0..metric.values.len())
        .filter(|&i| metric.values[i] > cutoff && metric.values[i] > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::FullySingularMetric { cutoff });
    }
    let dim = n.dim();
    let r = kept.len();
    let whitening = CMatrix::from_fn(dim, r, |row, c| {
        let j = kept[c];
        metric.vectors[(row, j)] / metric.values[j].sqrt()
    });
    let reduced = whitening.adjoint() * h.matrix() * &whitening;
    let (reduced, _) = HermitianMatrix::hermitize(reduced)?;
    let sol = hermitian_eig(&reduced)?;
    let lifted = &whitening * &sol.vectors;
    let pairs = (0..r)
        .map(|c| {
            let mut v: CVector = lifted.column(c).into_owned();
            let norm2 = (v.adjoint() * n.matrix() * &v)[(0, 0)].re;
            if norm2 > 0.0 {
                v /= c64(norm2.sqrt(), 0.0);
            }
            let metric_norm = (v.adjoint() * n.matrix() * &v)[(0, 0)].re;
            GevPair { value: sol.values[c], vector: v, metric_norm }
        })
        .collect();
    Ok(GevSolution { pairs, discarded: dim - r, metric_max: lambda_max, cutoff })
}

/// `m = U diag(σ) V†` with σ descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).iter_mut().for_each(|z| *z *= *s);
        }
        us * self.v.adjoint()
    }
}

pub fn svd(m: &CMatrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svd { u: CMatrix::zeros(rows, 0), singular_values: vec![], v: CMatrix::zeros(cols, 0) });
    }
    if let Some(out) = svd_nalgebra(m) {
        if svd_is_valid(m, &out) {
            return Ok(out);
        }
    }
    // nalgebra's bidiagonal SVD occasionally returns a wrong factorization
    // for complex rank-deficient input; one-sided Jacobi is slow but reliable.
    log::debug!("falling back to Jacobi SVD for a {rows}x{cols} matrix");
    let out = if rows >= cols {
        svd_jacobi(m)
    } else {
        let t = svd_jacobi(&m.adjoint());
        Svd { u: t.v, singular_values: t.singular_values, v: t.u }
    };
    if svd_is_valid(m, &out) {
        Ok(out)
    } else {
        Err(Error::NoConvergence)
    }
}

fn svd_nalgebra(m: &CMatrix) -> Option<Svd> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let dec = SVD::try_new(m.clone(), true, true, ITER_EPS, 1000 * k.max(10))?;
    let u = dec.u?;
    let v_t = dec.v_t?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    Some(Svd {
        u: CMatrix::from_fn(rows, k, |r, c| u[(r, order[c])]),
        singular_values: order.iter().map(|&i| dec.singular_values[i]).collect(),
        v: CMatrix::from_fn(cols, k, |r, c| v_t[(order[c], r)].conj()),
    })
}

fn svd_is_valid(m: &CMatrix, s: &Svd) -> bool {
    let k = s.singular_values.len();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let eye = CMatrix::identity(k, k);
    s.singular_values.iter().all(|x| x.is_finite() && *x >= 0.0)
        && (s.reconstruct() - m).norm() <= 1e-10 * scale
        && (s.u.adjoint() * &s.u - &eye).norm() <= 1e-10 * (k as f64)
        && (s.v.adjoint() * &s.v - &eye).norm() <= 1e-10 * (k as f64)
}

/// One-sided (Hestenes) Jacobi SVD for `rows >= cols`.
fn svd_jacobi(m: &CMatrix) -> Svd {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = CMatrix::identity(cols, cols);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let xp = mat[(r, p)];
                        let xq = mat[(r, q)] * phase.conj();
                        mat[(r, p)] = xp * c - xq * sn;
                        mat[(r, q)] = (xp * sn + xq * c) * phase;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let top = norms[order[0]];
    let mut u = CMatrix::zeros(rows, cols);
    let mut filled = 0;
    for (c, &j) in order.iter().enumerate() {
        if norms[j] > 1e-300 && norms[j] > f64::EPSILON * top * 1e-3 {
            u.set_column(c, &(a.column(j) / c64(norms[j], 0.0)));
            filled += 1;
        }
    }
    // complete U with unit vectors orthogonalized against the filled columns
    let mut e = 0;
    while filled < cols && e < rows {
        let mut x = CVector::zeros(rows);
        x[e] = ONE;
        for c in 0..filled {
            let proj = u.column(c).dotc(&x);
            x -= u.column(c) * proj;
        }
        for c in 0..filled {
            let proj = u.column(c).dotc(&x);
            x -= u.column(c) * proj;
        }
        let nx = x.norm();
        if nx > 1e-8 {
            u.set_column(filled, &(x / c64(nx, 0.0)));
            filled += 1;
        }
        e += 1;
    }
    Svd {
        u,
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        v: CMatrix::from_fn(cols, cols, |r, c| v[(r, order[c])]),
    }
}

/// Right eigenvectors of a general complex matrix (columns, unit norm) and
/// their eigenvalues, sorted by decreasing magnitude.
#[derive(Debug, Clone)]
pub struct GeneralEigen {
    pub values: Vec<C64>,
    pub vectors: CMatrix,
}

pub fn eig_general(m: &CMatrix) -> Result<GeneralEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("eigendecomposition needs a square matrix".into()));
    }
    let n = m.nrows();
    let (q, t) = Schur::try_new(m.clone(), ITER_EPS, 1000 * n.max(10))
        .ok_or(Error::NoConvergence)?
        .unpack();
    let scale = max_abs(&t).max(f64::MIN_POSITIVE);
    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = ONE;
        for j in (0..k).rev() {
            let mut acc = ZERO;
            for l in j + 1..=k {
                acc += t[(j, l)] * y[(l, k)];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < f64::EPSILON * scale {
                denom = c64(f64::EPSILON * scale, 0.0);
            }
            y[(j, k)] = -acc / denom;
        }
    }
    let mut vectors = q * y;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= c64(norm, 0.0);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[(b, b)].norm().total_cmp(&t[(a, a)].norm()));
    Ok(GeneralEigen {
        values: order.iter().map(|&i| t[(i, i)]).collect(),
        vectors: CMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]),
    })
}

/// Solves `a x = b` for square `a` by LU with partial pivoting.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    a.clone().lu().solve(b).ok_or_else(|| Error::Invalid("singular linear system".into()))
}

/// Orthonormal basis for the column span of `m` (thin SVD, rank by relative
/// singular value threshold).
pub fn orthonormalize(m: &CMatrix, rel_tol: f64) -> Result<CMatrix> {
    let dec = svd(m)?;
    let top = dec.singular_values.first().copied().unwrap_or(0.0);
    let rank = dec.singular_values.iter().filter(|&&s| s > rel_tol * top && s > 0.0).count();
    Ok(dec.u.columns(0, rank).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        HermitianMatrix::hermitize(m).unwrap().0
    }

    fn random_matrix(r: usize, c: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(r, c, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn frob(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_and_pauli_x_spectra() {
        let e = hermitian_eig(&HermitianMatrix::identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let x = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let e = hermitian_eig(&HermitianMatrix::new(x).unwrap()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_hermitian_reconstructs() {
        let m = random_hermitian(8, 3);
        let e = hermitian_eig(&m).unwrap();
        let resid = frob(&(e.reconstruct() - m.matrix()));
        assert!(resid < 1e-10 * frob(m.matrix()), "residual {resid}");
        let gram = e.vectors.adjoint() * &e.vectors;
        assert!(frob(&(gram - CMatrix::identity(8, 8))) < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        match HermitianMatrix::new(m) {
            Err(Error::NotHermitian { asymmetry, .. }) => assert!((asymmetry - 1.0).abs() < 1e-15),
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn gev_identity_pair() {
        let id = HermitianMatrix::identity(3);
        let sol = gev_regularized(&id, &id, 1e-11).unwrap();
        assert_eq!(sol.discarded, 0);
        for p in &sol.pairs {
            assert!((p.value - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gev_decoupled_ratios() {
        let h = HermitianMatrix::from_real_diagonal(&[1.0, 2.0]);
        let n = HermitianMatrix::from_real_diagonal(&[1.0, 0.5]);
        let sol = gev_regularized(&h, &n, 1e-11).unwrap();
        let values: Vec<f64> = sol.pairs.iter().map(|p| p.value).collect();
        assert!((values[0] - 1.0).abs() < 1e-14 && (values[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn gev_forced_null_direction() {
        let h = HermitianMatrix::from_real_diagonal(&[1.0, 2.0, 3.0]);
        let n = HermitianMatrix::from_real_diagonal(&[1.0, 1.0, 0.0]);
        let sol = gev_regularized(&h, &n, 1e-11).unwrap();
        assert_eq!(sol.discarded, 1);
        let values: Vec<f64> = sol.pairs.iter().map(|p| p.value).collect();
        assert_eq!(values.len(), 2);
        assert!((values[0] - 1.0).abs() < 1e-14 && (values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gev_boundary_ties_are_discarded() {
        let h = HermitianMatrix::from_real_diagonal(&[1.0, 2.0]);
        let n = HermitianMatrix::from_real_diagonal(&[1.0, 0.25]);
        let sol = gev_regularized(&h, &n, 0.25).unwrap();
        assert_eq!(sol.discarded, 1);
    }

    #[test]
    fn gev_error_paths() {
        let h = HermitianMatrix::identity(2);
        let zero = HermitianMatrix::from_real_diagonal(&[0.0, 0.0]);
        assert!(matches!(gev_regularized(&h, &zero, 1e-11), Err(Error::FullySingularMetric { .. })));
        let indefinite = HermitianMatrix::from_real_diagonal(&[1.0, -0.5]);
        match gev_regularized(&h, &indefinite, 1e-11) {
            Err(Error::NotPositiveSemidefinite { eigenvalue, .. }) => assert_eq!(eigenvalue, -0.5),
            other => panic!("expected NotPositiveSemidefinite, got {other:?}"),
        }
        let three = HermitianMatrix::identity(3);
        assert!(matches!(gev_regularized(&h, &three, 1e-11), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn gev_metric_orthonormal_on_random_pair() {
        let h = random_hermitian(10, 11);
        let b = random_matrix(10, 7, 12);
        let n = HermitianMatrix::hermitize(&b * b.adjoint()).unwrap().0;
        let sol = gev_regularized(&h, &n, 1e-11).unwrap();
        assert_eq!(sol.discarded, 3);
        // the equation holds on the range of n only
        let range = orthonormalize(n.matrix(), 1e-10).unwrap();
        let proj = &range * range.adjoint();
        for (i, pi) in sol.pairs.iter().enumerate() {
            for (j, pj) in sol.pairs.iter().enumerate() {
                let ov = (pi.vector.adjoint() * n.matrix() * &pj.vector)[(0, 0)];
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ov - c64(target, 0.0)).norm() < 1e-8);
            }
            let resid = &proj * (h.matrix() * &pi.vector - n.matrix() * &pi.vector * c64(pi.value, 0.0));
            assert!(resid.norm() < 1e-8, "residual {}", resid.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gev_with_identity_metric_matches_eig(n in 1usize..=32, seed in any::<u64>()) {
            let h = random_hermitian(n, seed);
            let direct = hermitian_eig(&h).unwrap();
            let sol = gev_regularized(&h, &HermitianMatrix::identity(n), 1e-11).unwrap();
            prop_assert_eq!(sol.discarded, 0);
            for (p, v) in sol.pairs.iter().zip(&direct.values) {
                prop_assert!((p.value - v).abs() < 1e-12 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn gev_scales_linearly(scale in 0.01f64..100.0, seed in any::<u64>()) {
            let h = random_hermitian(6, seed);
            let b = random_matrix(6, 6, seed ^ 0x5555);
            let n = HermitianMatrix::hermitize(&b * b.adjoint()).unwrap().0;
            let base = gev_regularized(&h, &n, 1e-11).unwrap();
            let scaled_h = HermitianMatrix::new(h.matrix() * c64(scale, 0.0)).unwrap();
            let scaled = gev_regularized(&scaled_h, &n, 1e-11).unwrap();
            prop_assert_eq!(base.discarded, scaled.discarded);
            for (a, b) in base.pairs.iter().zip(&scaled.pairs) {
                prop_assert!((a.value * scale - b.value).abs() < 1e-8 * (1.0 + b.value.abs()));
            }
        }
    }

    #[test]
    fn svd_examples() {
        let s = svd(&CMatrix::identity(4, 4)).unwrap();
        assert!(s.singular_values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let d = CMatrix::from_row_slice(2, 2, &[c64(3.0, 0.0), ZERO, ZERO, ZERO]);
        let s = svd(&d).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-14 && s.singular_values[1].abs() < 1e-14);
        for (r, c) in [(6, 4), (4, 6)] {
            let m = random_matrix(r, c, 99);
            let s = svd(&m).unwrap();
            assert!(frob(&(s.reconstruct() - &m)) < 1e-10 * frob(&m));
            let k = r.min(c);
            assert!(frob(&(s.u.adjoint() * &s.u - CMatrix::identity(k, k))) < 1e-10);
            assert!(frob(&(s.v.adjoint() * &s.v - CMatrix::identity(k, k))) < 1e-10);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_handles_rank_one_reshuffled_identity() {
        let r = CMatrix::from_fn(4, 4, |a, b| if (a == 0 || a == 3) && (b == 0 || b == 3) { ONE } else { ZERO });
        let s = svd(&r).unwrap();
        assert!((s.singular_values[0] - 2.0).abs() < 1e-14);
        assert!(s.singular_values[1..].iter().all(|x| *x < 1e-14));
    }

    #[test]
    fn jacobi_matches_reference_singular_values() {
        for (r, c, seed) in [(5, 5, 1), (7, 3, 2), (3, 7, 3)] {
            let mut m = random_matrix(r, c, seed);
            if r == c {
                // rank deficient: duplicate a column
                let col = m.column(0).into_owned();
                m.set_column(1, &col);
            }
            let j = if r >= c {
                svd_jacobi(&m)
            } else {
                let t = svd_jacobi(&m.adjoint());
                Svd { u: t.v, singular_values: t.singular_values, v: t.u }
            };
            assert!(svd_is_valid(&m, &j));
            let reference = hermitian_eig(&HermitianMatrix::hermitize(m.adjoint() * &m).unwrap().0).unwrap();
            let mut sq: Vec<f64> = reference.values.iter().map(|x| x.max(0.0).sqrt()).collect();
            sq.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in j.singular_values.iter().zip(&sq) {
                assert!((a - b).abs() < 1e-7, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn general_eigenvectors_satisfy_eigen_equation() {
        let m = random_matrix(9, 9, 5);
        let e = eig_general(&m).unwrap();
        for (j, lambda) in e.values.iter().enumerate() {
            let v = e.vectors.column(j);
            let resid = &m * v - v * *lambda;
            assert!(resid.norm() < 1e-10, "residual {}", resid.norm());
        }
        assert!(e.values.windows(2).all(|w| w[0].norm() >= w[1].norm()));
    }
}
