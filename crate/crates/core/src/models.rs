//! Translation-invariant nearest-neighbour spin-1/2 models.
//!
//! A model is a two-site term `h₀₁` (row index `i_0·d + i_1`) and an optional
//! global product perturbation `λ Π_j o_j`; the full Hamiltonian on `N` sites
//! is `Σ_l T^l h₀₁ T^{-l} + λ Π_j o_j`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{c64, relative_asymmetry, CMatrix, HERMITIAN_TOL};
use crate::mps::state::StateVector;
use crate::mps::tensor::hex;

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(0.0, -1.0), c64(0.0, 1.0), c64(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(-1.0, 0.0)])
}

pub fn identity2() -> CMatrix {
    CMatrix::identity(2, 2)
}

/// How the single-site field of the Ising term is split across the bond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldPlacement {
    /// `-g X ⊗ 1`: each site's field is counted once by the translation sum.
    #[default]
    Left,
    /// `-(g/2)(X ⊗ 1 + 1 ⊗ X)`.
    Symmetric,
}

/// Serializable model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ModelDescriptor {
    Ising {
        g: f64,
        #[serde(default)]
        field: FieldPlacement,
    },
    IsingXbasis {
        g: f64,
    },
    Heisenberg,
    HeisenbergTransformed {
        lambda: f64,
        sign: i8,
    },
}

impl ModelDescriptor {
    pub fn build(&self) -> Result<ModelSpec> {
        Ok(match *self {
            ModelDescriptor::Ising { g, field } => ising_model_with(g, field),
            ModelDescriptor::IsingXbasis { g } => ising_model_xbasis(g),
            ModelDescriptor::Heisenberg => heisenberg_model(),
            ModelDescriptor::HeisenbergTransformed { lambda, sign } => {
                if sign != 1 && sign != -1 {
                    return Err(Error::Invalid(format!("perturbation sign must be +1 or -1, got {sign}")));
                }
                heisenberg_transformed(lambda, sign)
            }
        })
    }

    /// Key identifying the momentum-labeled spectrum. The two Ising bases
    /// share a key; the rotated Heisenberg chain does not, since its momenta
    /// are relabeled.
    pub fn spectrum_key(&self) -> String {
        let text = match *self {
            ModelDescriptor::Ising { g, .. } | ModelDescriptor::IsingXbasis { g } => format!("ising:g={g:?}"),
            ModelDescriptor::Heisenberg => "heisenberg".to_string(),
            ModelDescriptor::HeisenbergTransformed { lambda, sign } => {
                format!("heisenberg-transformed:lambda={lambda:?}:sign={sign}")
            }
        };
        let digest = Sha256::digest(text.as_bytes());
        hex(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductPerturbation {
    pub op: CMatrix,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub descriptor: ModelDescriptor,
    pub d: usize,
    pub h01: CMatrix,
    pub perturbation: Option<ProductPerturbation>,
}

impl ModelSpec {
    pub fn new(descriptor: ModelDescriptor, h01: CMatrix, perturbation: Option<ProductPerturbation>) -> Result<Self> {
        let d = (h01.nrows() as f64).sqrt().round() as usize;
        if d * d != h01.nrows() || !h01.is_square() {
            return Err(Error::DimensionMismatch("two-site term must be d²×d²".into()));
        }
        let asymmetry = relative_asymmetry(&h01);
        if asymmetry > HERMITIAN_TOL {
            return Err(Error::NotHermitian { asymmetry, tolerance: HERMITIAN_TOL });
        }
        if let Some(p) = &perturbation {
            if p.op.nrows() != d || p.op.ncols() != d {
                return Err(Error::DimensionMismatch("perturbation operator must be d×d".into()));
            }
        }
        Ok(Self { descriptor, d, h01, perturbation })
    }

    pub fn name(&self) -> &'static str {
        match self.descriptor {
            ModelDescriptor::Ising { .. } => "ising",
            ModelDescriptor::IsingXbasis { .. } => "ising-xbasis",
            ModelDescriptor::Heisenberg => "heisenberg",
            ModelDescriptor::HeisenbergTransformed { .. } => "heisenberg-transformed",
        }
    }

    pub fn spectrum_key(&self) -> String {
        self.descriptor.spectrum_key()
    }

    /// Hash over the actual operator content, used to key network caches.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.d as u64).to_le_bytes());
        for z in self.h01.iter() {
            hasher.update(z.re.to_le_bytes());
            hasher.update(z.im.to_le_bytes());
        }
        if let Some(p) = &self.perturbation {
            hasher.update(p.strength.to_le_bytes());
            for z in p.op.iter() {
                hasher.update(z.re.to_le_bytes());
                hasher.update(z.im.to_le_bytes());
            }
        }
        hex(&hasher.finalize()[..16])
    }

    /// Whether `Π_j σ^y_j` is known to commute with the Hamiltonian.
    pub fn conserves_y_parity(&self) -> bool {
        matches!(self.descriptor, ModelDescriptor::Heisenberg | ModelDescriptor::HeisenbergTransformed { .. })
    }

    /// `H|v⟩` on a dense ring state.
    pub fn apply(&self, v: &StateVector) -> StateVector {
        let n = v.n_sites();
        let mut out = StateVector::zeros(v.phys_dim(), n).expect("same shape as input");
        for l in 0..n {
            out.axpy(c64(1.0, 0.0), &v.apply_two_site(&self.h01, l));
        }
        if let Some(p) = &self.perturbation {
            out.axpy(c64(p.strength, 0.0), &v.apply_product(&p.op));
        }
        out
    }

    /// Dense Hamiltonian matrix for very small rings.
    pub fn dense_matrix(&self, n_sites: usize) -> Result<CMatrix> {
        let dim = crate::mps::state::hilbert_dim(self.d, n_sites)?;
        if dim > 1 << 12 {
            return Err(Error::DenseGuard { n_sites, d: self.d });
        }
        let mut m = CMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut amps = vec![c64(0.0, 0.0); dim];
            amps[c] = c64(1.0, 0.0);
            let col = self.apply(&StateVector::from_amplitudes(self.d, n_sites, amps)?);
            for (r, z) in col.amplitudes().iter().enumerate() {
                m[(r, c)] = *z;
            }
        }
        Ok(m)
    }
}

pub fn ising_model(g: f64) -> ModelSpec {
    ising_model_with(g, FieldPlacement::Left)
}

/// `h₀₁ = -Z⊗Z - g X⊗1` (or the symmetric field split).
pub fn ising_model_with(g: f64, field: FieldPlacement) -> ModelSpec {
    let zz = pauli_z().kronecker(&pauli_z());
    let fieldterm = match field {
        FieldPlacement::Left => pauli_x().kronecker(&identity2()) * c64(g, 0.0),
        FieldPlacement::Symmetric => {
            (pauli_x().kronecker(&identity2()) + identity2().kronecker(&pauli_x())) * c64(g / 2.0, 0.0)
        }
    };
    ModelSpec::new(ModelDescriptor::Ising { g, field }, -zz - fieldterm, None).expect("valid Ising term")
}

/// `h₀₁ = -X⊗X - g Z⊗1`, the Hadamard-rotated Ising chain.
pub fn ising_model_xbasis(g: f64) -> ModelSpec {
    let xx = pauli_x().kronecker(&pauli_x());
    let field = pauli_z().kronecker(&identity2()) * c64(g, 0.0);
    ModelSpec::new(ModelDescriptor::IsingXbasis { g }, -xx - field, None).expect("valid Ising term")
}

/// `h₀₁ = ¼(X⊗X + Y⊗Y + Z⊗Z)`.
pub fn heisenberg_model() -> ModelSpec {
    let h = (pauli_x().kronecker(&pauli_x()) + pauli_y().kronecker(&pauli_y()) + pauli_z().kronecker(&pauli_z()))
        * c64(0.25, 0.0);
    ModelSpec::new(ModelDescriptor::Heisenberg, h, None).expect("valid Heisenberg term")
}

/// `h₀₁ = ¼(-X⊗X + Y⊗Y - Z⊗Z)` plus `sign·λ Π_j σ^y_j`.
///
/// This is the Heisenberg chain after `σ^y` on every other site, which only
/// makes sense for even `N`.
pub fn heisenberg_transformed(lambda: f64, sign: i8) -> ModelSpec {
    let h = (-pauli_x().kronecker(&pauli_x()) + pauli_y().kronecker(&pauli_y()) - pauli_z().kronecker(&pauli_z()))
        * c64(0.25, 0.0);
    let perturbation = if lambda != 0.0 {
        Some(ProductPerturbation { op: pauli_y(), strength: sign as f64 * lambda })
    } else {
        None
    };
    ModelSpec::new(ModelDescriptor::HeisenbergTransformed { lambda, sign }, h, perturbation)
        .expect("valid transformed Heisenberg term")
}

/// Default splitting strength for the parity-resolved Heisenberg workflow.
pub fn default_split_strength(n_sites: usize) -> f64 {
    0.1 * n_sites as f64
}

/// `P_y|v⟩` with `P_y = Π_j σ^y_j`.
pub fn apply_y_parity(v: &StateVector) -> StateVector {
    v.apply_product(&pauli_y())
}

/// `Π_{j even} σ^y_j |v⟩` (sites counted from 0), mapping eigenstates of the
/// rotated Heisenberg chain to those of the original one.
pub fn apply_sublattice_rotation(v: &StateVector) -> StateVector {
    let y = pauli_y();
    (0..v.n_sites()).step_by(2).fold(v.clone(), |acc, s| acc.apply_site(&y, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eig, HermitianMatrix};

    fn spectrum(model: &ModelSpec, n: usize) -> Vec<f64> {
        let m = model.dense_matrix(n).unwrap();
        hermitian_eig(&HermitianMatrix::new(m).unwrap()).unwrap().values
    }

    fn translation_matrix(n: usize) -> CMatrix {
        let dim = 1 << n;
        let mut t = CMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut amps = vec![c64(0.0, 0.0); dim];
            amps[c] = c64(1.0, 0.0);
            let v = StateVector::from_amplitudes(2, n, amps).unwrap().translate();
            for (r, z) in v.amplitudes().iter().enumerate() {
                t[(r, c)] = *z;
            }
        }
        t
    }

    fn operator_matrix(n: usize, f: impl Fn(&StateVector) -> StateVector) -> CMatrix {
        let dim = 1 << n;
        let mut m = CMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut amps = vec![c64(0.0, 0.0); dim];
            amps[c] = c64(1.0, 0.0);
            let v = f(&StateVector::from_amplitudes(2, n, amps).unwrap());
            for (r, z) in v.amplitudes().iter().enumerate() {
                m[(r, c)] = *z;
            }
        }
        m
    }

    #[test]
    fn classical_ising_term() {
        let h = ising_model(0.0).h01;
        let diag: Vec<f64> = (0..4).map(|i| h[(i, i)].re).collect();
        assert_eq!(diag, vec![-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn two_site_ising_expansion() {
        let h = ising_model(1.0).dense_matrix(2).unwrap();
        let x1 = pauli_x().kronecker(&identity2());
        let x2 = identity2().kronecker(&pauli_x());
        let expected = pauli_z().kronecker(&pauli_z()) * c64(-2.0, 0.0) - x1 - x2;
        assert!((h - expected).norm() < 1e-14);
    }

    #[test]
    fn ising_bases_share_spectrum() {
        for (g, n) in [(0.9, 6), (0.0, 4), (2.0, 2)] {
            let a = spectrum(&ising_model(g), n);
            let b = spectrum(&ising_model_xbasis(g), n);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "g={g}");
            }
        }
        // symmetric field split gives the same Hamiltonian
        let a = ising_model_with(0.7, FieldPlacement::Symmetric).dense_matrix(5).unwrap();
        let b = ising_model(0.7).dense_matrix(5).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn heisenberg_small_rings() {
        let h = HermitianMatrix::new(heisenberg_model().h01).unwrap();
        let vals = hermitian_eig(&h).unwrap().values;
        for (v, e) in vals.iter().zip([-0.75, 0.25, 0.25, 0.25]) {
            assert!((v - e).abs() < 1e-14);
        }
        let two = spectrum(&heisenberg_model(), 2);
        for (v, e) in two.iter().zip([-1.5, 0.5, 0.5, 0.5]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!((spectrum(&heisenberg_model(), 4)[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_heisenberg_is_unitarily_equivalent() {
        let n = 8;
        let a = spectrum(&heisenberg_model(), n);
        let b = spectrum(&heisenberg_transformed(0.0, 1), n);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
        let n = 6;
        let u = operator_matrix(n, apply_sublattice_rotation);
        let hb = heisenberg_model().dense_matrix(n).unwrap();
        let hp = heisenberg_transformed(0.0, 1).dense_matrix(n).unwrap();
        assert!((u.adjoint() * hb * &u - hp).norm() < 1e-12);
    }

    #[test]
    fn models_commute_with_translation_and_parity() {
        let n = 6;
        let t = translation_matrix(n);
        let p = operator_matrix(n, apply_y_parity);
        assert!((&p * &p - CMatrix::identity(1 << n, 1 << n)).norm() < 1e-12);
        for model in [ising_model(0.8), ising_model_xbasis(1.2), heisenberg_model(), heisenberg_transformed(0.6, -1)] {
            let h = model.dense_matrix(n).unwrap();
            let comm = &h * &t - &t * &h;
            assert!(comm.norm() <= 1e-12 * h.norm(), "{}", model.name());
            if model.conserves_y_parity() {
                assert!((&h * &p - &p * &h).norm() <= 1e-12 * h.norm());
            }
        }
    }

    #[test]
    fn spectrum_keys() {
        assert_eq!(ising_model(1.0).spectrum_key(), ising_model_xbasis(1.0).spectrum_key());
        assert_ne!(ising_model(1.0).spectrum_key(), ising_model(1.1).spectrum_key());
        assert_ne!(heisenberg_model().spectrum_key(), heisenberg_transformed(0.0, 1).spectrum_key());
        assert_ne!(heisenberg_transformed(0.8, 1).spectrum_key(), heisenberg_transformed(0.8, -1).spectrum_key());
        let text = serde_json::to_string(&ModelDescriptor::HeisenbergTransformed { lambda: 0.8, sign: -1 }).unwrap();
        assert_eq!(text, r#"{"name":"heisenberg-transformed","lambda":0.8,"sign":-1}"#);
        assert!(ModelDescriptor::HeisenbergTransformed { lambda: 0.8, sign: 0 }.build().is_err());
    }
}
