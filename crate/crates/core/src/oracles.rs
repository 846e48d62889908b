//! Exact reference spectra and comparison analytics.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_eig, svd, CMatrix, CVector, HermitianMatrix, C64};
use crate::models::{pauli_y, ModelSpec};
use crate::mps::state::StateVector;

/// Largest ring accepted by [`ed_spectrum`].
pub const ED_MAX_SITES: usize = 16;
/// Default absolute tolerance for treating two energies as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Even,
    Odd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledLevel {
    pub energy: f64,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parity: Option<i8>,
    /// Number of levels in this level's degenerate group at equal `k`.
    pub degeneracy: usize,
    /// Occupied Bogoliubov mode indices (analytic Ising levels only). Even
    /// sector index `j` stands for momentum `2π(j+½)/N`, odd sector for `2πj/N`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub modes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sector: Option<Sector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactSpectrum {
    /// Physical model key (see `ModelSpec::spectrum_key`).
    pub model: String,
    pub n_sites: usize,
    pub source: String,
    pub levels: Vec<LabeledLevel>,
    /// Eigenvectors of the retained levels, in level order, if requested.
    #[serde(skip)]
    pub vectors: Option<Vec<CVector>>,
}

impl ExactSpectrum {
    /// `energy, k, parity, degeneracy, modes` rows; modes are
    /// space-separated indices.
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::new();
        for h in header {
            s.push_str("# ");
            s.push_str(h);
            s.push('\n');
        }
        s.push_str("energy,k,parity,degeneracy,modes\n");
        for l in &self.levels {
            let parity = l.parity.map(|p| p.to_string()).unwrap_or_default();
            let modes = l
                .modes
                .as_ref()
                .map(|m| m.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            s.push_str(&format!("{:.16e},{},{},{},{}\n", l.energy, l.k, parity, l.degeneracy, modes));
        }
        s
    }

    /// Lowest energy in each momentum sector present in the levels.
    pub fn sector_minima(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.n_sites];
        for l in &self.levels {
            let slot: &mut Option<f64> = &mut out[l.k];
            if slot.map_or(true, |e| l.energy < e) {
                *slot = Some(l.energy);
            }
        }
        out
    }

    /// Levels at momentum `k`, ascending.
    pub fn at_momentum(&self, k: usize) -> Vec<&LabeledLevel> {
        self.levels.iter().filter(|l| l.k == k).collect()
    }
}

/// Which part of a spectrum to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    All,
    /// The lowest `n` levels.
    Count(usize),
    /// Levels with `E ≤ E_ground + cutoff`.
    Cutoff(f64),
}

// --- momentum-resolved exact diagonalization -------------------------------

struct Orbits {
    n_sites: usize,
    d: usize,
    /// Representative (smallest index in the translation orbit) per state.
    rep_of: Vec<u32>,
    /// `l` with `T^l |rep⟩ = |state⟩`.
    shift_of: Vec<u16>,
    reps: Vec<usize>,
    period: Vec<usize>,
}

fn translate_index(c: usize, d: usize, top: usize) -> usize {
    (c % d) * top + c / d
}

impl Orbits {
    fn new(d: usize, n_sites: usize) -> Result<Self> {
        let dim = crate::mps::state::hilbert_dim(d, n_sites)?;
        let top = dim / d;
        let mut rep_of = vec![u32::MAX; dim];
        let mut shift_of = vec![0u16; dim];
        let mut reps = Vec::new();
        let mut period = Vec::new();
        for c in 0..dim {
            if rep_of[c] != u32::MAX {
                continue;
            }
            // c is the smallest unvisited index, hence the representative
            let mut x = c;
            let mut l = 0;
            loop {
                if rep_of[x] == u32::MAX {
                    rep_of[x] = c as u32;
                    shift_of[x] = l as u16;
                }
                x = translate_index(x, d, top);
                l += 1;
                if x == c {
                    break;
                }
            }
            reps.push(c);
            period.push(l);
        }
        Ok(Self { n_sites, d, rep_of, shift_of, reps, period })
    }

    /// Representatives admissible at momentum `k` (their orbit supports it).
    fn sector(&self, k: usize) -> Vec<usize> {
        (0..self.reps.len()).filter(|&r| (k * self.period[r]) % self.n_sites == 0).collect()
    }
}

/// `op|c⟩` for a basis state, as sparse `(index, amplitude)` pairs.
fn apply_h_basis(model: &ModelSpec, c: usize, n_sites: usize, out: &mut Vec<(usize, C64)>) {
    let d = model.d;
    let stride = |s: usize| d.pow((n_sites - 1 - s) as u32);
    for l in 0..n_sites {
        let next = (l + 1) % n_sites;
        let (s1, s2) = (stride(l), stride(next));
        let i = (c / s1) % d;
        let j = (c / s2) % d;
        let base = c - i * s1 - j * s2;
        for ip in 0..d {
            for jp in 0..d {
                let w = model.h01[(ip * d + jp, i * d + j)];
                if w != c64(0.0, 0.0) {
                    out.push((base + ip * s1 + jp * s2, w));
                }
            }
        }
    }
    if let Some(p) = &model.perturbation {
        for (idx, w) in apply_product_basis(&p.op, d, c, n_sites) {
            out.push((idx, w * p.strength));
        }
    }
}

fn apply_product_basis(op: &CMatrix, d: usize, c: usize, n_sites: usize) -> Vec<(usize, C64)> {
    let mut terms = vec![(0usize, c64(1.0, 0.0))];
    for s in 0..n_sites {
        let stride = d.pow((n_sites - 1 - s) as u32);
        let i = (c / stride) % d;
        let mut next = Vec::with_capacity(terms.len());
        for &(idx, w) in &terms {
            for ip in 0..d {
                let o = op[(ip, i)];
                if o != c64(0.0, 0.0) {
                    next.push((idx + ip * stride, w * o));
                }
            }
        }
        terms = next;
    }
    terms
}

/// Matrix of a translation-invariant operator in the momentum-`k` basis
/// `|r,k⟩ = p_r^{-1/2} Σ_{j<p_r} e^{i2πkj/N} T^j|r⟩`.
fn sector_matrix(
    orbits: &Orbits,
    sector: &[usize],
    k: usize,
    apply: &dyn Fn(usize, &mut Vec<(usize, C64)>),
) -> CMatrix {
    let n = orbits.n_sites;
    let pos: std::collections::HashMap<usize, usize> = sector.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let rep_slot: std::collections::HashMap<usize, usize> =
        orbits.reps.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut m = CMatrix::zeros(sector.len(), sector.len());
    let mut buf = Vec::new();
    for (col, &r) in sector.iter().enumerate() {
        buf.clear();
        apply(orbits.reps[r], &mut buf);
        let pr = orbits.period[r] as f64;
        for &(c, w) in &buf {
            let rp = rep_slot[&(orbits.rep_of[c] as usize)];
            let Some(&row) = pos.get(&rp) else { continue };
            let l = orbits.shift_of[c] as f64;
            let phase = C64::from_polar(1.0, -2.0 * PI * (k as f64) * l / n as f64);
            let ratio = (pr / orbits.period[rp] as f64).sqrt();
            m[(row, col)] += w * phase * ratio;
        }
    }
    m
}

fn sector_vector_to_full(orbits: &Orbits, sector: &[usize], k: usize, coeffs: &CVector) -> CVector {
    let dim = orbits.rep_of.len();
    let top = dim / orbits.d;
    let n = orbits.n_sites as f64;
    let mut out = CVector::zeros(dim);
    for (i, &r) in sector.iter().enumerate() {
        let p = orbits.period[r];
        let amp = coeffs[i] / (p as f64).sqrt();
        let mut c = orbits.reps[r];
        for j in 0..p {
            out[c] += amp * C64::from_polar(1.0, 2.0 * PI * (k * j) as f64 / n);
            c = translate_index(c, orbits.d, top);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct EdOptions {
    pub window: Window,
    pub vectors: bool,
    pub degeneracy_tol: f64,
}

impl Default for EdOptions {
    fn default() -> Self {
        Self { window: Window::All, vectors: false, degeneracy_tol: DEGENERACY_TOL }
    }
}

struct SectorLevels {
    energies: Vec<f64>,
    parities: Vec<Option<i8>>,
    vectors: Option<Vec<CVector>>,
}

/// Full spectrum of `model` on `n_sites`, block diagonalized by momentum.
/// When the model conserves `P_y` each level also carries its parity,
/// resolved inside degenerate blocks.
pub fn ed_spectrum(model: &ModelSpec, n_sites: usize, opts: &EdOptions) -> Result<ExactSpectrum> {
    if n_sites > ED_MAX_SITES || n_sites < 2 {
        return Err(Error::DenseGuard { n_sites, d: model.d });
    }
    let orbits = Orbits::new(model.d, n_sites)?;
    let with_parity = model.conserves_y_parity() && model.d == 2;
    let py = pauli_y();
    let per_k: Vec<SectorLevels> = (0..n_sites)
        .into_par_iter()
        .map(|k| -> Result<SectorLevels> {
            let sector = orbits.sector(k);
            if sector.is_empty() {
                return Ok(SectorLevels { energies: vec![], parities: vec![], vectors: None });
            }
            let h = sector_matrix(&orbits, &sector, k, &|c, out| apply_h_basis(model, c, n_sites, out));
            let (h, asym) = HermitianMatrix::hermitize(h)?;
            if asym > 1e-10 {
                return Err(Error::NotHermitian { asymmetry: asym, tolerance: 1e-10 });
            }
            let eig = hermitian_eig(&h)?;
            let mut vecs = eig.vectors.clone();
            let mut parities = vec![None; eig.values.len()];
            if with_parity {
                let p = sector_matrix(&orbits, &sector, k, &|c, out| {
                    out.extend(apply_product_basis(&py, 2, c, n_sites));
                });
                let mut start = 0;
                while start < eig.values.len() {
                    let mut end = start + 1;
                    while end < eig.values.len() && eig.values[end] - eig.values[end - 1] <= opts.degeneracy_tol {
                        end += 1;
                    }
                    let block = vecs.columns(start, end - start).into_owned();
                    let pb = block.adjoint() * &p * &block;
                    let (pb, _) = HermitianMatrix::hermitize(pb)?;
                    let pe = hermitian_eig(&pb)?;
                    let rotated = &block * &pe.vectors;
                    for (j, val) in pe.values.iter().enumerate() {
                        vecs.set_column(start + j, &rotated.column(j));
                        parities[start + j] = Some(if *val >= 0.0 { 1 } else { -1 });
                    }
                    start = end;
                }
            }
            let vectors = if opts.vectors {
                Some((0..eig.values.len()).map(|j| sector_vector_to_full(&orbits, &sector, k, &vecs.column(j).into_owned())).collect())
            } else {
                None
            };
            Ok(SectorLevels { energies: eig.values, parities, vectors })
        })
        .collect::<Result<_>>()?;

    let mut entries: Vec<(f64, usize, Option<i8>, Option<CVector>)> = Vec::new();
    for (k, mut s) in per_k.into_iter().enumerate() {
        let mut vecs = s.vectors.take().map(|v| v.into_iter());
        for (j, e) in s.energies.iter().enumerate() {
            let v = vecs.as_mut().and_then(|it| it.next());
            entries.push((*e, k, s.parities[j], v));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let entries = apply_window(entries, opts.window, |e| e.0);
    let mut levels: Vec<LabeledLevel> = entries
        .iter()
        .map(|(e, k, p, _)| LabeledLevel { energy: *e, k: *k, parity: *p, degeneracy: 1, modes: None, sector: None })
        .collect();
    assign_degeneracy(&mut levels, opts.degeneracy_tol);
    let vectors = if opts.vectors { Some(entries.into_iter().map(|e| e.3.expect("vectors requested")).collect()) } else { None };
    Ok(ExactSpectrum { model: model.spectrum_key(), n_sites, source: "ed".into(), levels, vectors })
}

fn apply_window<T>(sorted: Vec<T>, window: Window, energy: impl Fn(&T) -> f64) -> Vec<T> {
    match window {
        Window::All => sorted,
        Window::Count(n) => sorted.into_iter().take(n).collect(),
        Window::Cutoff(c) => {
            let Some(e0) = sorted.first().map(&energy) else { return sorted };
            sorted.into_iter().filter(|x| energy(x) <= e0 + c).collect()
        }
    }
}

fn assign_degeneracy(levels: &mut [LabeledLevel], tol: f64) {
    let groups = multiplet_grouping(&levels.iter().map(|l| (l.k, l.energy)).collect::<Vec<_>>(), tol);
    for g in groups {
        for &i in &g.members {
            levels[i].degeneracy = g.size;
        }
    }
}

// --- single-state labels ----------------------------------------------------

/// Momentum of a (normalized) state from `⟨v|T|v⟩ ≈ e^{-i2πk/N}`; the
/// residual is the distance to that root of unity.
pub fn momentum_of_state(v: &StateVector) -> (usize, f64) {
    let n = v.n_sites();
    let norm = v.norm_sqr();
    let t = v.inner(&v.translate()) / c64(norm.max(f64::MIN_POSITIVE), 0.0);
    // ⟨T⟩ = e^{-iθ} with θ = 2πk/N
    let theta = (-t.arg()).rem_euclid(2.0 * PI);
    let k = ((theta * n as f64 / (2.0 * PI)).round() as usize) % n;
    let root = C64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64);
    (k, (t - root).norm())
}

/// `⟨P_y⟩` snapped to ±1, with the residual.
pub fn parity_of_state(v: &StateVector) -> (i8, f64) {
    let norm = v.norm_sqr();
    let p = v.inner(&crate::models::apply_y_parity(v)) / c64(norm.max(f64::MIN_POSITIVE), 0.0);
    let s: i8 = if p.re >= 0.0 { 1 } else { -1 };
    (s, (p - c64(s as f64, 0.0)).norm())
}

// --- analytic Ising spectrum ------------------------------------------------

/// Mode energies of one parity sector, with the sector's momentum offset in
/// half units (`2θN/2π` = 2j+1 for even, 2j for odd).
fn ising_modes(g: f64, n_sites: usize, sector: Sector) -> Vec<(usize, f64)> {
    let n = n_sites as f64;
    (0..n_sites)
        .map(|j| match sector {
            Sector::Even => {
                let theta = 2.0 * PI * (j as f64 + 0.5) / n;
                (j, 2.0 * (1.0 + g * g - 2.0 * g * theta.cos()).max(0.0).sqrt())
            }
            Sector::Odd => {
                if j == 0 {
                    (j, 2.0 * (g - 1.0))
                } else if 2 * j == n_sites {
                    (j, 2.0 * (g + 1.0))
                } else {
                    let theta = 2.0 * PI * j as f64 / n;
                    (j, 2.0 * (1.0 + g * g - 2.0 * g * theta.cos()).max(0.0).sqrt())
                }
            }
        })
        .collect()
}

/// Enumerates occupation patterns of `modes` with the requested number
/// parity and excitation energy `≤ cutoff`, calling `emit(energy, occupied)`.
fn enumerate_occupations(modes: &[(usize, f64)], want_odd: bool, cutoff: f64, emit: &mut dyn FnMut(f64, &[usize])) {
    // negative-energy modes (only the signed zero mode) are toggled up front
    let (neg, pos): (Vec<_>, Vec<_>) = modes.iter().copied().partition(|m| m.1 < 0.0);
    let mut pos = pos;
    pos.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let neg_count = neg.len();
    for mask in 0..(1usize << neg_count) {
        let mut occ: Vec<usize> = Vec::new();
        let mut e = 0.0;
        for (b, m) in neg.iter().enumerate() {
            if mask >> b & 1 == 1 {
                occ.push(m.0);
                e += m.1;
            }
        }
        dfs(&pos, 0, e, &mut occ, want_odd, cutoff, emit);
    }

    fn dfs(
        pos: &[(usize, f64)],
        from: usize,
        e: f64,
        occ: &mut Vec<usize>,
        want_odd: bool,
        cutoff: f64,
        emit: &mut dyn FnMut(f64, &[usize]),
    ) {
        if (occ.len() % 2 == 1) == want_odd {
            emit(e, occ);
        }
        for i in from..pos.len() {
            let ne = e + pos[i].1;
            if ne > cutoff {
                break;
            }
            occ.push(pos[i].0);
            dfs(pos, i + 1, ne, occ, want_odd, cutoff, emit);
            occ.pop();
        }
    }
}

/// Exact spectrum of the periodic transverse-field Ising chain (either basis
/// convention) from its free-fermion solution.
pub fn ising_exact_spectrum(g: f64, n_sites: usize, window: Window) -> Result<ExactSpectrum> {
    ising_exact_spectrum_with(g, n_sites, window, DEGENERACY_TOL)
}

pub fn ising_exact_spectrum_with(g: f64, n_sites: usize, window: Window, tol: f64) -> Result<ExactSpectrum> {
    if n_sites < 2 || n_sites % 2 == 1 {
        return Err(Error::Invalid(format!("analytic Ising spectrum needs an even ring, got N={n_sites}")));
    }
    if !g.is_finite() {
        return Err(Error::Invalid("field strength must be finite".into()));
    }
    let sectors = [Sector::Even, Sector::Odd];
    let vacua: Vec<(Sector, Vec<(usize, f64)>, f64)> = sectors
        .iter()
        .map(|&s| {
            let modes = ising_modes(g, n_sites, s);
            let vac = -0.5 * modes.iter().map(|m| m.1).sum::<f64>();
            (s, modes, vac)
        })
        .collect();
    let ground = vacua
        .iter()
        .map(|(s, modes, vac)| {
            // lowest state with the right number parity
            let mut best = f64::INFINITY;
            enumerate_occupations(modes, *s == Sector::Odd, f64::INFINITY.min(8.0 * (1.0 + g.abs())), &mut |e, _| {
                best = best.min(e)
            });
            vac + best
        })
        .fold(f64::INFINITY, f64::min);

    let collect = |limit: f64| -> Vec<LabeledLevel> {
        let mut out = Vec::new();
        for (s, modes, vac) in &vacua {
            let cutoff = limit - vac;
            enumerate_occupations(modes, *s == Sector::Odd, cutoff + 1e-12, &mut |e, occ| {
                let total: usize = occ.iter().map(|&j| match s {
                    Sector::Even => 2 * j + 1,
                    Sector::Odd => 2 * j,
                }).sum();
                let mut modes: Vec<usize> = occ.to_vec();
                modes.sort_unstable();
                out.push(LabeledLevel {
                    energy: vac + e,
                    k: (total / 2) % n_sites,
                    parity: None,
                    degeneracy: 1,
                    modes: Some(modes),
                    sector: Some(*s),
                });
            });
        }
        out.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.k.cmp(&b.k)).then(a.modes.cmp(&b.modes)));
        out
    };
    let mut levels = match window {
        Window::All => collect(f64::INFINITY),
        Window::Cutoff(c) => collect(ground + c),
        Window::Count(n) => {
            let mut span = 4.0 * (1.0 + g.abs());
            loop {
                let lv = collect(ground + span);
                let total = 1usize.checked_shl(n_sites as u32).unwrap_or(usize::MAX);
                if lv.len() >= n || lv.len() >= total {
                    break lv.into_iter().take(n).collect();
                }
                span *= 2.0;
            }
        }
    };
    assign_degeneracy(&mut levels, tol);
    Ok(ExactSpectrum {
        model: crate::models::ising_model(g).spectrum_key(),
        n_sites,
        source: "ising-analytic".into(),
        levels,
        vectors: None,
    })
}

// --- analytics ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multiplet {
    pub k: usize,
    pub energy: f64,
    pub size: usize,
    /// Indices into the input list.
    pub members: Vec<usize>,
}

impl Multiplet {
    /// SU(2) name for sizes 1, 3, 5, 7.
    pub fn su2_name(&self) -> Option<&'static str> {
        match self.size {
            1 => Some("singlet"),
            3 => Some("triplet"),
            5 => Some("quintuplet"),
            7 => Some("septuplet"),
            _ => None,
        }
    }
}

/// Groups `(k, energy)` levels whose energies lie within `tol` of their
/// neighbour at the same momentum. Output is ordered by `k`, then energy.
pub fn multiplet_grouping(levels: &[(usize, f64)], tol: f64) -> Vec<Multiplet> {
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].0.cmp(&levels[b].0).then(levels[a].1.total_cmp(&levels[b].1)));
    let mut out: Vec<Multiplet> = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for i in order {
        let (k, e) = levels[i];
        match (out.last_mut(), last) {
            (Some(g), Some((lk, le))) if lk == k && e - le <= tol => {
                g.members.push(i);
                g.size += 1;
                g.energy += (e - g.energy) / g.size as f64;
            }
            _ => out.push(Multiplet { k, energy: e, size: 1, members: vec![i] }),
        }
        last = Some((k, e));
    }
    out
}

/// `sin` of the largest canonical angle between the column spans of `u` and
/// `v` (both with orthonormal columns). Subspaces of different dimension
/// are at distance 1.
pub fn canonical_angle_distance(u: &CMatrix, v: &CMatrix) -> Result<f64> {
    if u.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch(format!("ambient dimensions {} and {}", u.nrows(), v.nrows())));
    }
    for (name, m) in [("u", u), ("v", v)] {
        let k = m.ncols();
        let dev = (m.adjoint() * m - CMatrix::identity(k, k)).norm();
        if dev > 1e-8 {
            return Err(Error::Invalid(format!("{name} is not orthonormal (deviation {dev:.2e})")));
        }
    }
    if u.ncols() != v.ncols() {
        return Ok(1.0);
    }
    if u.ncols() == 0 {
        return Ok(0.0);
    }
    // ‖(1 - UU†)V‖₂ = sin θ_max, accurate also for nearly equal subspaces
    let resid = v - u * (u.adjoint() * v);
    let s = svd(&resid)?;
    Ok(s.singular_values.first().copied().unwrap_or(0.0).clamp(0.0, 1.0))
}

/// `|e_mps − e_exact| / |e_exact|`; falls back to the absolute difference
/// (flagged) when `e_exact` is zero.
pub fn relative_precision(e_mps: f64, e_exact: f64) -> (f64, bool) {
    if e_exact == 0.0 {
        ((e_mps - e_exact).abs(), true)
    } else {
        ((e_mps - e_exact).abs() / e_exact.abs(), false)
    }
}

/// Orthonormal basis (columns) for a set of state vectors.
pub fn span_basis(vectors: &[CVector]) -> Result<CMatrix> {
    if vectors.is_empty() {
        return Err(Error::Invalid("empty vector set".into()));
    }
    let m = CMatrix::from_columns(vectors);
    crate::linalg::orthonormalize(&m, 1e-10)
}
