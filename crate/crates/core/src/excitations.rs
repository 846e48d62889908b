//! Momentum-resolved excitations on top of a fixed backbone tensor.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, c64, gev_regularized, max_abs, CMatrix, CVector, HermitianMatrix, C64};
use crate::models::{heisenberg_model, heisenberg_transformed, pauli_y, ModelSpec};
use crate::mps::cache::{load_or_compute, BuildOptions, CacheKey, CacheStatus};
use crate::mps::network::NetworkSet;
use crate::mps::tensor::SiteTensor;
use crate::mps::transfer::normalize_dominant;

/// Default relative metric cutoff.
pub const DEFAULT_EPS: f64 = 1e-11;
/// Assembled sums more asymmetric than this indicate a contraction bug.
pub const ASYMMETRY_LIMIT: f64 = 1e-8;
/// Branches whose measured parity misses its sector sign by more than this
/// are flagged.
pub const PARITY_TOL: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct EffectivePair {
    pub k: usize,
    pub h_eff: HermitianMatrix,
    pub n_eff: HermitianMatrix,
    /// Asymmetry of the raw sums before Hermitization, relative to the
    /// summed magnitude of their terms.
    pub asymmetry: f64,
}

fn phase(k: usize, m: usize, n: usize) -> C64 {
    C64::from_polar(1.0, -2.0 * PI * ((k * m) % n) as f64 / n as f64)
}

/// Asymmetry is measured against `scale`, the summed magnitude of the terms,
/// so that sums which cancel to nearly zero are not mistaken for bugs.
fn hermitian_checked(m: CMatrix, scale: f64, what: &str) -> Result<(HermitianMatrix, f64)> {
    let asym = if scale > 0.0 { asymmetry(&m) / scale } else { 0.0 };
    let (h, _) = HermitianMatrix::hermitize(m)?;
    if asym > ASYMMETRY_LIMIT {
        log::error!("{what} asymmetry {asym:.3e}");
        return Err(Error::NotHermitian { asymmetry: asym, tolerance: ASYMMETRY_LIMIT });
    }
    Ok((h, asym))
}

/// `N_eff(k) = Σ_m e^{-i2πkm/N} N₀ₘ` and
/// `H_eff(k) = Σ_{n,m} e^{-i2πkm/N} H₀ₙₘ (+ λ Σ_m e^{-i2πkm/N} P₀ₘ)`.
pub fn assemble_effective(set: &NetworkSet, lambda: Option<f64>, k: usize) -> Result<EffectivePair> {
    let n = set.n_sites;
    if k >= n {
        return Err(Error::OutOfRange(format!("momentum k={k} must be below N={n}")));
    }
    if set.norm.len() != n {
        return Err(Error::Invalid("network set is missing norm networks".into()));
    }
    let dim = set.norm[0].nrows();
    let mut ne = CMatrix::zeros(dim, dim);
    let mut he = CMatrix::zeros(dim, dim);
    let (mut n_scale, mut h_scale) = (0.0, 0.0);
    for m in 0..n {
        let w = phase(k, m, n);
        let hm = set.ham_summed(m);
        n_scale += max_abs(&set.norm[m]);
        h_scale += max_abs(&hm);
        ne += &set.norm[m] * w;
        he += hm * w;
    }
    if let Some(lambda) = lambda {
        let parity = set
            .parity
            .as_ref()
            .ok_or_else(|| Error::Invalid("model has a product perturbation but no parity networks were built".into()))?;
        for (m, p) in parity.iter().enumerate() {
            h_scale += lambda.abs() * max_abs(p);
            he += p * (phase(k, m, n) * lambda);
        }
    }
    let (n_eff, an) = hermitian_checked(ne, n_scale, "N_eff")?;
    let (h_eff, ah) = hermitian_checked(he, h_scale, "H_eff")?;
    Ok(EffectivePair { k, h_eff, n_eff, asymmetry: an.max(ah) })
}

/// `Σ_m e^{-i2πkm/N} P₀ₘ`.
pub fn parity_effective(set: &NetworkSet, k: usize) -> Result<CMatrix> {
    let parity = set.parity.as_ref().ok_or_else(|| Error::Invalid("no parity networks".into()))?;
    let n = set.n_sites;
    let dim = parity[0].nrows();
    let mut out = CMatrix::zeros(dim, dim);
    for (m, p) in parity.iter().enumerate() {
        out += p * phase(k, m, n);
    }
    Ok(out)
}

/// Null directions of `N_eff(k)` from the gauge freedom
/// `B → e^{-ik}A X − X A`: `D²`, or `D² − 1` at `k = 0` where `X = 1` drops
/// out. Exact for injective backbones once the ring is large enough that the
/// momentum sector is not smaller than `dD²`.
pub fn expected_null_dimension(_phys: usize, bond: usize, k: usize) -> usize {
    bond * bond - usize::from(k == 0)
}

/// The commonly quoted count `D²(d−1)`, plus one at `k = 0`. It agrees with
/// [`expected_null_dimension`] for `d = 2, k ≠ 0` only.
pub fn quoted_null_dimension(phys: usize, bond: usize, k: usize) -> usize {
    bond * bond * (phys - 1) + usize::from(k == 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub energy: f64,
    /// `vec(B)`, normalized to `B† N_eff B = 1`.
    #[serde(with = "complex_vec")]
    pub vector: CVector,
    pub metric_norm: f64,
    /// Degenerate-group index within this momentum.
    pub group: usize,
    /// Measured `⟨P_y⟩` when parity networks are available.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parity: Option<f64>,
    /// Momentum after the parity relabeling rule.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k_relabel: Option<usize>,
    /// Set when the measured parity disagrees with the sector.
    #[serde(default)]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumBlock {
    pub k: usize,
    pub branches: Vec<Branch>,
    pub discarded: usize,
    pub expected_discarded: usize,
    pub asymmetry: f64,
}

/// Solves `H_eff(k) B = E N_eff(k) B` and keeps the lowest `branches`
/// solutions (all if `None`).
pub fn solve_fixed_momentum(pair: &EffectivePair, eps: f64, phys: usize, bond: usize, branches: Option<usize>) -> Result<MomentumBlock> {
    let sol = gev_regularized(&pair.h_eff, &pair.n_eff, eps)?;
    let expected = expected_null_dimension(phys, bond, pair.k);
    if sol.discarded != expected {
        log::warn!(
            "k={}: discarded {} metric directions, expected {} (cutoff {:.3e})",
            pair.k,
            sol.discarded,
            expected,
            sol.cutoff
        );
    }
    let keep = branches.unwrap_or(sol.pairs.len()).min(sol.pairs.len());
    let mut out: Vec<Branch> = sol
        .pairs
        .into_iter()
        .take(keep)
        .map(|p| Branch {
            energy: p.value,
            vector: p.vector,
            metric_norm: p.metric_norm,
            group: 0,
            parity: None,
            k_relabel: None,
            flagged: false,
        })
        .collect();
    tag_groups(&mut out, crate::oracles::DEGENERACY_TOL);
    Ok(MomentumBlock { k: pair.k, branches: out, discarded: sol.discarded, expected_discarded: expected, asymmetry: pair.asymmetry })
}

fn tag_groups(branches: &mut [Branch], tol: f64) {
    let mut group = 0;
    for i in 0..branches.len() {
        if i > 0 && branches[i].energy - branches[i - 1].energy > tol {
            group += 1;
        }
        branches[i].group = group;
    }
}

#[derive(Debug, Clone, Default)]
pub struct StageTimes {
    pub networks_s: f64,
    pub solve_s: f64,
    pub cache: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionResult {
    /// Physical model key, comparable with exact spectra.
    pub model: String,
    pub model_hash: String,
    pub n_sites: usize,
    pub phys: usize,
    pub bond: usize,
    pub eps: f64,
    /// Hash of the backbone tensor(s) as supplied.
    pub tensor_hash: String,
    /// `⟨φ_A|H|φ_A⟩/⟨φ_A|φ_A⟩` of the backbone, if known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ground_energy: Option<f64>,
    pub blocks: Vec<MomentumBlock>,
    #[serde(skip)]
    pub timings: StageTimes,
}

impl DispersionResult {
    pub fn lowest(&self, k: usize) -> Option<f64> {
        self.blocks.iter().find(|b| b.k == k).and_then(|b| b.branches.first()).map(|b| b.energy)
    }

    /// `k, branch, energy, discarded, parity, k_relabel` rows; energies with
    /// 17 significant digits.
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str("# ");
            s.push_str(h);
            s.push('\n');
        }
        s.push_str("k,branch,energy,discarded,parity,k_relabel\n");
        for b in &self.blocks {
            for (i, br) in b.branches.iter().enumerate() {
                let parity = br.parity.map(|p| format!("{p:.16e}")).unwrap_or_default();
                let kr = br.k_relabel.map(|k| k.to_string()).unwrap_or_default();
                s.push_str(&format!("{},{},{:.16e},{},{},{}\n", b.k, i, br.energy, b.discarded, parity, kr));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct DispersionOptions {
    pub cache_dir: Option<PathBuf>,
    pub build: BuildOptions,
}

/// Backbone rescaled to unit dominant eigenvalue, plus its cache key.
fn prepared(model: &ModelSpec, a: &SiteTensor, n_sites: usize) -> Result<(SiteTensor, CacheKey)> {
    if a.phys_dim() != model.d {
        return Err(Error::DimensionMismatch(format!("tensor has d={}, model has d={}", a.phys_dim(), model.d)));
    }
    let (an, _) = normalize_dominant(a)?;
    let key = CacheKey {
        model_hash: model.content_hash(),
        tensor_hash: an.content_hash(),
        n_sites,
        phys: an.phys_dim(),
        bond: an.bond_dim(),
        parity: model.perturbation.is_some(),
    };
    Ok((an, key))
}

/// All momenta `k = 0..N−1`, lowest `branches` solutions each.
pub fn dispersion(
    model: &ModelSpec,
    a: &SiteTensor,
    n_sites: usize,
    branches: usize,
    eps: f64,
    opts: &DispersionOptions,
) -> Result<DispersionResult> {
    let (an, key) = prepared(model, a, n_sites)?;
    let max_branches = an.len() - expected_null_dimension(an.phys_dim(), an.bond_dim(), 1);
    if branches == 0 || branches > max_branches {
        return Err(Error::Invalid(format!("branch count {branches} must lie in 1..={max_branches}")));
    }
    let t0 = Instant::now();
    let parity_op = model.perturbation.as_ref().map(|p| p.op.clone());
    let (set, status) = load_or_compute(opts.cache_dir.as_deref(), &key, &an, &model.h01, parity_op.as_ref(), &opts.build)?;
    let networks_s = t0.elapsed().as_secs_f64();
    log::info!(
        "networks: {:.3} s ({})",
        networks_s,
        match status {
            CacheStatus::Hit => "cache hit, build skipped",
            CacheStatus::Stored => "built and cached",
            CacheStatus::Uncached => "built",
        }
    );
    let t1 = Instant::now();
    let lambda = model.perturbation.as_ref().map(|p| p.strength);
    let blocks: Vec<MomentumBlock> = (0..n_sites)
        .into_par_iter()
        .map(|k| {
            let pair = assemble_effective(&set, lambda, k)?;
            let mut block = solve_fixed_momentum(&pair, eps, an.phys_dim(), an.bond_dim(), Some(branches))?;
            if set.parity.is_some() {
                let p = parity_effective(&set, k)?;
                for br in &mut block.branches {
                    let v = &br.vector;
                    let num = v.dotc(&(&p * v));
                    let den = v.dotc(&(pair.n_eff.matrix() * v));
                    br.parity = Some((num / den).re);
                }
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;
    let solve_s = t1.elapsed().as_secs_f64();
    log::info!("solve: {:.3} s for {} momenta", solve_s, n_sites);
    let ground_energy = crate::ground::rayleigh_energy(&an, model, n_sites).ok();
    Ok(DispersionResult {
        model: model.spectrum_key(),
        model_hash: model.content_hash(),
        n_sites,
        phys: an.phys_dim(),
        bond: an.bond_dim(),
        eps,
        tensor_hash: a.content_hash(),
        ground_energy,
        blocks,
        timings: StageTimes {
            networks_s,
            solve_s,
            cache: Some(format!("{status:?}").to_lowercase()),
        },
    })
}

/// Momentum relabeling between the rotated and the original Heisenberg
/// chain: parity +1 keeps `k′`, parity −1 maps to `k′ + N/2 (mod N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentumLabel {
    pub k_prime: usize,
    pub parity: i8,
    pub k: usize,
}

impl MomentumLabel {
    pub fn new(k_prime: usize, parity: i8, n_sites: usize) -> Self {
        Self { k_prime, parity, k: relabel(k_prime, parity, n_sites) }
    }
}

pub fn relabel(k_prime: usize, parity: i8, n_sites: usize) -> usize {
    if parity >= 0 {
        k_prime % n_sites
    } else {
        (k_prime + n_sites / 2) % n_sites
    }
}

/// Parity-resolved Heisenberg dispersion. `a_minus` is the backbone for
/// `H′ − λP_y` (parity +1 states), `a_plus` for `H′ + λP_y` (parity −1). The
/// result is labeled by the momentum of the original chain and holds up to
/// `2b` branches per momentum; a branch that turns out to carry the opposite
/// parity of its run is dropped.
pub fn heisenberg_split_dispersion(
    a_minus: &SiteTensor,
    a_plus: &SiteTensor,
    lambda: f64,
    n_sites: usize,
    branches: usize,
    eps: f64,
    opts: &DispersionOptions,
) -> Result<DispersionResult> {
    if n_sites % 2 == 1 {
        return Err(Error::Invalid(format!("parity splitting needs an even ring, got N={n_sites}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Invalid(format!("splitting strength must be positive, got {lambda}")));
    }
    if a_minus.bond_dim() != a_plus.bond_dim() || a_minus.phys_dim() != a_plus.phys_dim() {
        return Err(Error::DimensionMismatch("both backbones must share d and D".into()));
    }
    let runs = [(heisenberg_transformed(lambda, -1), a_minus, 1i8), (heisenberg_transformed(lambda, 1), a_plus, -1i8)];
    let mut merged: Vec<Vec<Branch>> = vec![Vec::new(); n_sites];
    let mut discarded = vec![(0usize, 0usize, 0.0f64); n_sites];
    let mut timings = StageTimes::default();
    for (model, a, sector) in runs {
        let res = dispersion(&model, a, n_sites, branches, eps, opts)?;
        timings.networks_s += res.timings.networks_s;
        timings.solve_s += res.timings.solve_s;
        for block in res.blocks {
            let k = relabel(block.k, sector, n_sites);
            if sector == 1 {
                discarded[k] = (block.discarded, block.expected_discarded, block.asymmetry);
            }
            for mut br in block.branches {
                let measured = br.parity.unwrap_or(f64::NAN);
                if (measured + sector as f64).abs() <= PARITY_TOL {
                    // a state of the other sector; the other run covers it
                    log::info!("k′={}: dropping opposite-parity branch at E={:.6}", block.k, br.energy);
                    continue;
                }
                // H± = H′ ± λP_y shifts a parity-p state by ±λp; both runs
                // target the sector where the shift is −λ
                br.energy += lambda;
                br.flagged = !((measured - sector as f64).abs() <= PARITY_TOL);
                if br.flagged {
                    log::warn!("k′={}: branch at E={:.6} has ⟨P_y⟩={:.4}, sector {}", block.k, br.energy, measured, sector);
                }
                br.k_relabel = Some(k);
                merged[k].push(br);
            }
        }
    }
    let blocks = merged
        .into_iter()
        .enumerate()
        .map(|(k, mut brs)| {
            brs.sort_by(|a, b| a.energy.total_cmp(&b.energy));
            tag_groups(&mut brs, crate::oracles::DEGENERACY_TOL);
            MomentumBlock { k, branches: brs, discarded: discarded[k].0, expected_discarded: discarded[k].1, asymmetry: discarded[k].2 }
        })
        .collect();
    let hb = heisenberg_model();
    Ok(DispersionResult {
        model: hb.spectrum_key(),
        model_hash: hb.content_hash(),
        n_sites,
        phys: a_minus.phys_dim(),
        bond: a_minus.bond_dim(),
        eps,
        tensor_hash: format!("{}+{}", a_minus.content_hash(), a_plus.content_hash()),
        ground_energy: None,
        blocks,
        timings,
    })
}

/// `⟨ψ_k(B)|P_y|ψ_k(B)⟩ / ⟨ψ_k(B)|ψ_k(B)⟩` from networks.
pub fn measured_parity(set: &NetworkSet, k: usize, b: &CVector) -> Result<f64> {
    let p = parity_effective(set, k)?;
    let pair = assemble_effective(set, None, k)?;
    Ok((b.dotc(&(&p * b)) / b.dotc(&(pair.n_eff.matrix() * b))).re)
}

/// Product operator used by the parity workflow.
pub fn y_parity_operator() -> CMatrix {
    pauli_y()
}

mod complex_vec {
    use super::{c64, CVector};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVector, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(CVector::from_iterator(pairs.len(), pairs.into_iter().map(|[re, im]| c64(re, im))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ising_model;
    use crate::mps::network::compute_network_set;
    use crate::mps::state::bloch_state_vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_backbone(seed: u64, bond: usize) -> SiteTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normalize_dominant(&SiteTensor::random(2, bond, &mut rng)).unwrap().0
    }

    #[test]
    fn identity_hamiltonian_gives_scaled_metric() {
        let a = random_backbone(1, 2);
        let n = 5;
        let set = compute_network_set(&a, &CMatrix::identity(4, 4), None, n, true, None).unwrap();
        for k in 0..n {
            let p = assemble_effective(&set, None, k).unwrap();
            let diff = p.h_eff.matrix() - p.n_eff.matrix() * c64(n as f64, 0.0);
            assert!(diff.norm() < 1e-10 * p.n_eff.matrix().norm());
        }
    }

    #[test]
    fn effective_forms_match_bloch_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_backbone(3, 2);
        let b = SiteTensor::random(2, 2, &mut rng);
        let n = 6;
        let model = ising_model(1.0);
        let set = compute_network_set(&a, &model.h01, None, n, true, None).unwrap();
        let v = b.to_vector();
        for k in 0..n {
            let p = assemble_effective(&set, None, k).unwrap();
            let psi = bloch_state_vector(&a, &b, k, n).unwrap();
            let norm = psi.norm_sqr();
            let en = psi.inner(&model.apply(&psi)).re;
            let qn = v.dotc(&(p.n_eff.matrix() * &v)).re;
            let qh = v.dotc(&(p.h_eff.matrix() * &v)).re;
            assert!((qn - norm).abs() < 1e-9 * norm.abs().max(1e-12));
            assert!((qh - en).abs() < 1e-9 * en.abs().max(1e-12));
        }
    }

    #[test]
    fn real_backbone_gives_conjugate_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = normalize_dominant(&SiteTensor::random_real_symmetric(2, 2, &mut rng)).unwrap().0;
        let n = 6;
        let set = compute_network_set(&a, &ising_model(0.5).h01, None, n, true, None).unwrap();
        for k in 1..n {
            let x = assemble_effective(&set, None, k).unwrap();
            let y = assemble_effective(&set, None, n - k).unwrap();
            assert!((x.n_eff.matrix().conjugate() - y.n_eff.matrix()).norm() < 1e-12 * x.n_eff.matrix().norm());
        }
    }

    #[test]
    fn null_space_counts_and_orthonormal_branches() {
        let a = random_backbone(5, 2);
        let n = 8;
        let model = ising_model(1.0);
        let set = compute_network_set(&a, &model.h01, None, n, true, None).unwrap();
        for k in 0..n {
            let pair = assemble_effective(&set, None, k).unwrap();
            let block = solve_fixed_momentum(&pair, DEFAULT_EPS, 2, 2, None).unwrap();
            assert_eq!(block.discarded, if k == 0 { 3 } else { 4 }, "k={k}");
            let vs: Vec<&CVector> = block.branches.iter().map(|b| &b.vector).collect();
            for i in 0..vs.len() {
                for j in 0..vs.len() {
                    let g = vs[i].dotc(&(pair.n_eff.matrix() * vs[j]));
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - c64(want, 0.0)).norm() < 1e-8);
                }
            }
            assert!(block.branches.windows(2).all(|w| w[0].energy <= w[1].energy));
        }
    }

    #[test]
    fn relabeling_rule() {
        assert_eq!(relabel(3, -1, 16), 11);
        for k in 0..16 {
            assert_eq!(relabel(k, 1, 16), k);
            assert_eq!(relabel(relabel(k, -1, 16), -1, 16), k);
        }
        assert_eq!(MomentumLabel::new(3, -1, 16).k, 11);
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let a = random_backbone(6, 2);
        let res = dispersion(&ising_model(1.0), &a, 4, 2, DEFAULT_EPS, &DispersionOptions::default()).unwrap();
        let csv = res.to_csv(&["test".into()]);
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4 * 2);
        let json = serde_json::to_string(&res).unwrap();
        let back: DispersionResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.blocks, res.blocks);
        for line in csv.lines().skip(2) {
            let cols: Vec<&str> = line.split(',').collect();
            let k: usize = cols[0].parse().unwrap();
            let i: usize = cols[1].parse().unwrap();
            let e: f64 = cols[2].parse().unwrap();
            assert_eq!(e, res.blocks[k].branches[i].energy);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = random_backbone(7, 2);
        let opts = DispersionOptions::default();
        assert!(dispersion(&ising_model(1.0), &a, 4, 0, DEFAULT_EPS, &opts).is_err());
        assert!(dispersion(&ising_model(1.0), &a, 4, 5, DEFAULT_EPS, &opts).is_err());
        assert!(heisenberg_split_dispersion(&a, &a, 0.5, 5, 1, DEFAULT_EPS, &opts).is_err());
        assert!(heisenberg_split_dispersion(&a, &a, 0.0, 4, 1, DEFAULT_EPS, &opts).is_err());
    }
}
