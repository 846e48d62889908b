//! Comparison of variational dispersions against exact spectra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitations::DispersionResult;
use crate::linalg::{CMatrix, CVector};
use crate::models::apply_sublattice_rotation;
use crate::mps::state::{bloch_state_vector, StateVector};
use crate::mps::tensor::SiteTensor;
use crate::mps::transfer::normalize_dominant;
use crate::oracles::{canonical_angle_distance, relative_precision, span_basis, ExactSpectrum};

/// Default slack for counting variational-bound violations.
pub const BOUND_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub k: usize,
    pub branch: usize,
    pub e_mps: f64,
    pub e_exact: Option<f64>,
    pub rel: Option<f64>,
    /// `rel` is an absolute difference because the exact level is zero.
    pub absolute: bool,
    /// `e_mps` lies below the exact level it is paired with.
    pub violation: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub model: String,
    pub n_sites: usize,
    pub rows: Vec<CompareRow>,
    pub violations: usize,
    /// Worst relative error of the lowest branch over all momenta.
    pub max_rel_lowest: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub angles: Vec<AngleRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub k: usize,
    /// Branch indices at this momentum spanning the compared subspace.
    pub branches: Vec<usize>,
    pub distance: f64,
}

/// Pairs the `i`-th variational level at momentum `k` with the `i`-th exact
/// level at `k`. Interlacing makes every such pair a one-sided bound.
pub fn compare_spectra(mps: &DispersionResult, exact: &ExactSpectrum, bound_tol: f64) -> Result<CompareReport> {
    if mps.n_sites != exact.n_sites {
        return Err(Error::DimensionMismatch(format!("ring sizes differ: {} vs {}", mps.n_sites, exact.n_sites)));
    }
    if mps.model != exact.model {
        return Err(Error::Invalid(format!("model keys differ: {} vs {}", mps.model, exact.model)));
    }
    let mut rows = Vec::new();
    let mut max_rel_lowest: f64 = 0.0;
    for block in &mps.blocks {
        let levels = exact.at_momentum(block.k);
        for (i, br) in block.branches.iter().enumerate() {
            let e_exact = levels.get(i).map(|l| l.energy);
            let (rel, absolute) = match e_exact {
                Some(e) => {
                    let (r, a) = relative_precision(br.energy, e);
                    (Some(r), a)
                }
                None => (None, false),
            };
            if i == 0 {
                if let Some(r) = rel {
                    max_rel_lowest = max_rel_lowest.max(r);
                }
            }
            let violation = e_exact.is_some_and(|e| br.energy < e - bound_tol);
            rows.push(CompareRow { k: block.k, branch: i, e_mps: br.energy, e_exact, rel, absolute, violation });
        }
    }
    let violations = rows.iter().filter(|r| r.violation).count();
    Ok(CompareReport { model: mps.model.clone(), n_sites: mps.n_sites, rows, violations, max_rel_lowest, angles: Vec::new() })
}

impl CompareReport {
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str(&format!("# {h}\n"));
        }
        s.push_str("k,branch,e_mps,e_exact,rel,absolute,violation\n");
        let f = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.16e},{},{},{},{}\n",
                r.k,
                r.branch,
                r.e_mps,
                f(r.e_exact),
                f(r.rel),
                r.absolute,
                r.violation
            ));
        }
        s
    }
}

/// Backbone(s) a dispersion was computed from.
#[derive(Debug, Clone, Copy)]
pub enum Backbone<'a> {
    Single(&'a SiteTensor),
    /// Parity-split Heisenberg run: `minus` carries parity +1 states.
    Split { minus: &'a SiteTensor, plus: &'a SiteTensor },
}

/// Dense, normalized state of branch `i` at momentum `k`, in the frame of the
/// model the result is labeled with.
pub fn branch_state(result: &DispersionResult, backbone: Backbone<'_>, k: usize, i: usize) -> Result<StateVector> {
    let block = result
        .blocks
        .iter()
        .find(|b| b.k == k)
        .ok_or_else(|| Error::OutOfRange(format!("no momentum {k} in result")))?;
    let br = block.branches.get(i).ok_or_else(|| Error::OutOfRange(format!("no branch {i} at k={k}")))?;
    let n = result.n_sites;
    let (a, k_prime, rotate) = match backbone {
        Backbone::Single(a) => (a, k, false),
        Backbone::Split { minus, plus } => {
            let p = br.parity.ok_or_else(|| Error::Invalid("split result without parity tags".into()))?;
            if p >= 0.0 {
                (minus, k, true)
            } else {
                (plus, (k + n / 2) % n, true)
            }
        }
    };
    let (an, _) = normalize_dominant(a)?;
    let b = SiteTensor::from_vector(an.phys_dim(), an.bond_dim(), &br.vector)?;
    let psi = bloch_state_vector(&an, &b, k_prime, n)?;
    let psi = if rotate { apply_sublattice_rotation(&psi) } else { psi };
    if psi.norm_sqr() < 1e-24 {
        return Err(Error::DegenerateState { norm: psi.norm_sqr().sqrt() });
    }
    Ok(psi.normalized())
}

fn to_cvector(v: &StateVector) -> CVector {
    CVector::from_column_slice(v.amplitudes())
}

/// Canonical-angle distance between the span of the given branches at `k`
/// and the span of the given exact eigenvectors.
pub fn subspace_distance(
    result: &DispersionResult,
    backbone: Backbone<'_>,
    k: usize,
    branches: &[usize],
    exact_vectors: &[CVector],
) -> Result<f64> {
    let states: Vec<CVector> = branches
        .iter()
        .map(|&i| branch_state(result, backbone, k, i).map(|s| to_cvector(&s)))
        .collect::<Result<_>>()?;
    let u: CMatrix = span_basis(&states)?;
    let v: CMatrix = span_basis(exact_vectors)?;
    canonical_angle_distance(&u, &v)
}

/// A dispersion viewed as a reference spectrum, so results can be compared
/// with each other.
pub fn dispersion_as_spectrum(result: &DispersionResult) -> ExactSpectrum {
    let mut levels = Vec::new();
    for block in &result.blocks {
        for br in &block.branches {
            let size = block.branches.iter().filter(|b| b.group == br.group).count();
            levels.push(crate::oracles::LabeledLevel {
                energy: br.energy,
                k: block.k,
                parity: br.parity.map(|p| if p >= 0.0 { 1 } else { -1 }),
                degeneracy: size,
                modes: None,
                sector: None,
            });
        }
    }
    levels.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.k.cmp(&b.k)));
    ExactSpectrum { model: result.model.clone(), n_sites: result.n_sites, source: "dispersion".into(), levels, vectors: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excitations::{dispersion, DispersionOptions, DEFAULT_EPS};
    use crate::models::ising_model;
    use crate::oracles::{ed_spectrum, EdOptions};
    use rand::SeedableRng;

    fn backbone() -> SiteTensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        SiteTensor::random(2, 2, &mut rng)
    }

    #[test]
    fn self_comparison_is_exact() {
        let res = dispersion(&ising_model(1.0), &backbone(), 6, 3, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        let rep = compare_spectra(&res, &dispersion_as_spectrum(&res), BOUND_TOL).unwrap();
        assert_eq!(rep.rows.len(), 18);
        assert!(rep.rows.iter().all(|r| r.rel == Some(0.0) && !r.violation));
    }

    #[test]
    fn random_backbone_respects_bound() {
        let model = ising_model(1.0);
        let res = dispersion(&model, &backbone(), 6, 3, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        let ed = ed_spectrum(&model, 6, &EdOptions::default()).unwrap();
        let rep = compare_spectra(&res, &ed, BOUND_TOL).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.rows.iter().all(|r| r.e_exact.is_some()));
    }

    #[test]
    fn mismatches_are_rejected() {
        let model = ising_model(1.0);
        let res = dispersion(&model, &backbone(), 6, 1, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        let other = ed_spectrum(&ising_model(0.5), 6, &EdOptions::default()).unwrap();
        assert!(compare_spectra(&res, &other, BOUND_TOL).is_err());
        let small = ed_spectrum(&model, 4, &EdOptions::default()).unwrap();
        assert!(compare_spectra(&res, &small, BOUND_TOL).is_err());
    }

    #[test]
    fn branch_states_carry_their_energy() {
        let model = ising_model(0.8);
        let a = backbone();
        let res = dispersion(&model, &a, 6, 2, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        for k in 0..6 {
            for i in 0..2 {
                let psi = branch_state(&res, Backbone::Single(&a), k, i).unwrap();
                let e = psi.inner(&model.apply(&psi)).re;
                assert!((e - res.blocks[k].branches[i].energy).abs() < 1e-9);
                assert_eq!(crate::oracles::momentum_of_state(&psi).0, k);
            }
        }
    }
}
