//! Exact contraction of the open ring networks.
//!
//! Every network here is a quadratic form in `vec(B)`: the bra copy of `B` sits
//! on site 0 and the ket copy on site `s = (N - m) mod N`, so that
//!
//! ```text
//! vec(B)† M vec(B) = ⟨φ_A(B)| T^{-m} X |φ_A(B)⟩
//! ```
//!
//! with `X` the identity (norm networks), `h` on sites `n, n+1` (Hamiltonian
//! networks) or `Π_j o_j` (parity networks). The row index of `M` is the bra
//! index `i·D² + α'·D + β'`, the column index the ket index.
//!
//! The ring is cut at the two open slots. The two closed segments are products
//! of precomputed transfer-matrix powers, each `O(D⁶)`, and the final
//! contraction with the open slots is `O(d²D⁶)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c64, svd, CMatrix, CVector, C64};

use super::tensor::SiteTensor;
use super::transfer::{transfer_matrix, TransferPowers};

const CZERO: C64 = c64_const(0.0, 0.0);

const fn c64_const(re: f64, im: f64) -> C64 {
    nalgebra::Complex { re, im }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkKind {
    Norm,
    Ham { n: usize },
    Parity,
}

#[derive(Debug, Clone)]
pub struct EffNetworkMatrix {
    pub kind: NetworkKind,
    pub m: usize,
    pub matrix: CMatrix,
}

/// Splits a two-site operator into `Σ_r L_r ⊗ R_r` (operator Schmidt form).
pub fn operator_terms(h: &CMatrix, d: usize) -> Result<Vec<(CMatrix, CMatrix)>> {
    if h.nrows() != d * d || h.ncols() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "two-site operator is {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            d * d,
            d * d
        )));
    }
    // reshuffle h[(i1 i2),(j1 j2)] -> r[(i1 j1),(i2 j2)]
    let r = CMatrix::from_fn(d * d, d * d, |row, col| {
        let (i1, j1) = (row / d, row % d);
        let (i2, j2) = (col / d, col % d);
        h[(i1 * d + i2, j1 * d + j2)]
    });
    let dec = svd(&r)?;
    let top = dec.singular_values.first().copied().unwrap_or(0.0);
    let mut terms = Vec::new();
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s <= 1e-14 * top || s == 0.0 {
            continue;
        }
        let left = CMatrix::from_fn(d, d, |i, j| dec.u[(i * d + j, k)] * s);
        let right = CMatrix::from_fn(d, d, |i, j| dec.v[(i * d + j, k)].conj());
        terms.push((left, right));
    }
    Ok(terms)
}

/// Background shared by all networks of one tensor: the tensor, the ring
/// length and powers of its (possibly operator-dressed) transfer matrix.
#[derive(Debug, Clone)]
pub struct RingContext {
    a: SiteTensor,
    n_sites: usize,
    powers: TransferPowers,
    /// Operator on every site, folded into `powers` and into the open slots.
    background_op: Option<CMatrix>,
}

impl RingContext {
    pub fn new(a: &SiteTensor, n_sites: usize) -> Result<Self> {
        Self::build(a, n_sites, None)
    }

    /// Context whose every site carries `op` (parity networks).
    pub fn with_product_operator(a: &SiteTensor, n_sites: usize, op: &CMatrix) -> Result<Self> {
        a.check_op(op)?;
        Self::build(a, n_sites, Some(op.clone()))
    }

    fn build(a: &SiteTensor, n_sites: usize, op: Option<CMatrix>) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::Invalid(format!("ring needs at least two sites, got {n_sites}")));
        }
        let e = transfer_matrix(a, op.as_ref())?;
        Ok(Self { a: a.clone(), n_sites, powers: TransferPowers::new(e.matrix(), n_sites), background_op: op })
    }

    pub fn tensor(&self) -> &SiteTensor {
        &self.a
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn powers(&self) -> &TransferPowers {
        &self.powers
    }

    fn ket_site(&self, m: usize) -> usize {
        (self.n_sites - m) % self.n_sites
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if m >= self.n_sites {
            return Err(Error::OutOfRange(format!("slot offset m={m} must be below N={}", self.n_sites)));
        }
        Ok(())
    }

    /// Product of site transfers over `start..end` (no wrap), with dressed
    /// transfers at the listed sites. `None` means identity.
    fn segment(&self, start: usize, end: usize, dressed: &[(usize, CMatrix)]) -> Option<CMatrix> {
        if start >= end {
            return None;
        }
        let mut acc: Option<CMatrix> = None;
        let mut cur = start;
        let push = |acc: &mut Option<CMatrix>, m: &CMatrix| {
            *acc = Some(match acc.take() {
                None => m.clone(),
                Some(x) => x * m,
            });
        };
        let mut inside: Vec<&(usize, CMatrix)> = dressed.iter().filter(|(s, _)| *s >= start && *s < end).collect();
        inside.sort_by_key(|(s, _)| *s);
        for (s, e) in inside {
            if *s > cur {
                push(&mut acc, self.powers.get(s - cur));
            }
            push(&mut acc, e);
            cur = s + 1;
        }
        if end > cur {
            push(&mut acc, self.powers.get(end - cur));
        }
        acc
    }

    fn open_op<'a>(&'a self, site: usize, sparse: &'a [(usize, CMatrix)]) -> Option<&'a CMatrix> {
        sparse.iter().find(|(s, _)| *s == site).map(|(_, o)| o).or(self.background_op.as_ref())
    }

    /// Open network with bra slot at site 0, ket slot at `ket_site`, and
    /// single-site operators at the given sites.
    fn contract(&self, ket_site: usize, sparse: &[(usize, CMatrix)]) -> Result<CMatrix> {
        let a = &self.a;
        let n = self.n_sites;
        let dressed: Vec<(usize, CMatrix)> = sparse
            .iter()
            .filter(|(s, _)| *s != 0 && *s != ket_site)
            .map(|(s, o)| Ok((*s, transfer_matrix(a, Some(o))?.0)))
            .collect::<Result<_>>()?;
        let op0 = self.open_op(0, sparse);
        if ket_site == 0 {
            let right = self.segment(1, n, &dressed);
            return Ok(same_slot(a, op0, right.as_ref()));
        }
        let ops = self.open_op(ket_site, sparse);
        let bra_side = match op0 {
            Some(o) => a.apply_physical(o)?,
            None => a.clone(),
        };
        let ket_side = match ops {
            Some(o) => a.apply_physical(&o.adjoint())?,
            None => a.clone(),
        };
        let left = self.segment(1, ket_site, &dressed);
        let right = self.segment(ket_site + 1, n, &dressed);
        Ok(split_slots(&bra_side, left.as_ref(), &ket_side, right.as_ref()))
    }

    /// `vec(B)† N₀ₘ vec(B) = ⟨φ_A(B)|T^{-m}|φ_A(B)⟩`, or with the context's
    /// product operator inserted.
    pub fn norm_network(&self, m: usize) -> Result<EffNetworkMatrix> {
        self.check_m(m)?;
        let kind = if self.background_op.is_some() { NetworkKind::Parity } else { NetworkKind::Norm };
        Ok(EffNetworkMatrix { kind, m, matrix: self.contract(self.ket_site(m), &[])? })
    }

    /// `vec(B)† H₀ₙₘ vec(B) = ⟨φ_A(B)|T^{-m} h_{n,n+1}|φ_A(B)⟩` for `h`
    /// given in operator Schmidt form.
    pub fn ham_network_terms(&self, terms: &[(CMatrix, CMatrix)], n: usize, m: usize) -> Result<EffNetworkMatrix> {
        self.check_m(m)?;
        if n >= self.n_sites {
            return Err(Error::OutOfRange(format!("bond n={n} must be below N={}", self.n_sites)));
        }
        if self.background_op.is_some() {
            return Err(Error::Invalid("Hamiltonian networks need a plain context".into()));
        }
        let dim = self.a.len();
        let mut total = CMatrix::zeros(dim, dim);
        // T^{-m} h_{n,n+1} = h_{n-m,n-m+1} T^{-m}: in the frame of the bra slot
        // the operator sits m sites to the left.
        let site = (n + self.n_sites - m) % self.n_sites;
        let next = (site + 1) % self.n_sites;
        for (l, r) in terms {
            total += self.contract(self.ket_site(m), &[(site, l.clone()), (next, r.clone())])?;
        }
        Ok(EffNetworkMatrix { kind: NetworkKind::Ham { n }, m, matrix: total })
    }

    pub fn ham_network(&self, h: &CMatrix, n: usize, m: usize) -> Result<EffNetworkMatrix> {
        let terms = operator_terms(h, self.a.phys_dim())?;
        self.ham_network_terms(&terms, n, m)
    }

    /// Derivative of `⟨φ_A|X|φ_A⟩` with respect to the conjugated tensor on
    /// site 0, for `X` a product of the given single-site operators (and the
    /// background operator everywhere else).
    pub fn bra_environment(&self, sparse: &[(usize, CMatrix)]) -> Result<CVector> {
        let a = &self.a;
        let dressed: Vec<(usize, CMatrix)> = sparse
            .iter()
            .filter(|(s, _)| *s != 0)
            .map(|(s, o)| Ok((*s, transfer_matrix(a, Some(o))?.0)))
            .collect::<Result<_>>()?;
        let right = self.segment(1, self.n_sites, &dressed);
        let ket0 = match self.open_op(0, sparse) {
            Some(o) => a.apply_physical(o)?,
            None => a.clone(),
        };
        Ok(bra_open_vector(&ket0, right.as_ref()))
    }
}

/// `env[i,a',b'] = Σ_{a,b} K_i[a,b] R[(b,b'),(a,a')]`.
pub(crate) fn bra_open_vector(ket0: &SiteTensor, right: Option<&CMatrix>) -> CVector {
    let d = ket0.phys_dim();
    let dim = ket0.bond_dim();
    let mut out = CVector::zeros(d * dim * dim);
    for i in 0..d {
        for ap in 0..dim {
            for bp in 0..dim {
                let mut acc = CZERO;
                for a in 0..dim {
                    for b in 0..dim {
                        let r = match right {
                            Some(r) => r[(b * dim + bp, a * dim + ap)],
                            None => {
                                if a == b && ap == bp {
                                    c64(1.0, 0.0)
                                } else {
                                    CZERO
                                }
                            }
                        };
                        acc += ket0.get(i, a, b) * r;
                    }
                }
                out[(i * dim + ap) * dim + bp] = acc;
            }
        }
    }
    out
}

fn to_row_major(m: Option<&CMatrix>, dd: usize) -> Vec<C64> {
    let mut out = vec![CZERO; dd * dd];
    match m {
        Some(m) => {
            for r in 0..dd {
                for c in 0..dd {
                    out[r * dd + c] = m[(r, c)];
                }
            }
        }
        None => {
            for r in 0..dd {
                out[r * dd + r] = c64(1.0, 0.0);
            }
        }
    }
    out
}

/// Both open slots on site 0: `M[(i,a',b'),(j,a,b)] = O_ij R[(b,b'),(a,a')]`.
fn same_slot(a: &SiteTensor, op: Option<&CMatrix>, right: Option<&CMatrix>) -> CMatrix {
    let d = a.phys_dim();
    let dim = a.bond_dim();
    let dd = dim * dim;
    let r = to_row_major(right, dd);
    let mut out = CMatrix::zeros(d * dd, d * dd);
    for i in 0..d {
        for j in 0..d {
            let w = match op {
                Some(o) => o[(i, j)],
                None if i == j => c64(1.0, 0.0),
                None => CZERO,
            };
            if w == CZERO {
                continue;
            }
            for ap in 0..dim {
                for bp in 0..dim {
                    for x in 0..dim {
                        for y in 0..dim {
                            let val = r[(y * dim + bp) * dd + x * dim + ap];
                            out[(i * dd + ap * dim + bp, j * dd + x * dim + y)] = w * val;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Distinct open slots:
/// `M[(i,a',b'),(j,c,e)] = Σ Ã_i[a,b] L[(b,b'),(c,c')] conj(Â_j[c',e']) R[(e,e'),(a,a')]`.
fn split_slots(bra_side: &SiteTensor, left: Option<&CMatrix>, ket_side: &SiteTensor, right: Option<&CMatrix>) -> CMatrix {
    let d = bra_side.phys_dim();
    let dim = bra_side.bond_dim();
    let dd = dim * dim;
    let d3 = dd * dim;
    let l = to_row_major(left, dd);
    let r = to_row_major(right, dd);

    // x[i][a][b'][c][c'] = Σ_b Ã_i[a,b] L[b,b',c,c']
    let mut x = vec![CZERO; d * dd * dd];
    for i in 0..d {
        for a in 0..dim {
            let xrow = &mut x[(i * dim + a) * d3..(i * dim + a + 1) * d3];
            for b in 0..dim {
                let w = bra_side.get(i, a, b);
                if w == CZERO {
                    continue;
                }
                let lrow = &l[b * d3..(b + 1) * d3];
                for (xv, lv) in xrow.iter_mut().zip(lrow) {
                    *xv += w * lv;
                }
            }
        }
    }

    // rp[a'][e][a][e'] = R[(e,e'),(a,a')]
    let mut rp = vec![CZERO; dd * dd];
    for ap in 0..dim {
        for e in 0..dim {
            for a in 0..dim {
                for ep in 0..dim {
                    rp[((ap * dim + e) * dim + a) * dim + ep] = r[(e * dim + ep) * dd + a * dim + ap];
                }
            }
        }
    }

    let conj_ket: Vec<C64> = ket_side.data().iter().map(|z| z.conj()).collect();
    let mut out = CMatrix::zeros(d * dd, d * dd);
    let mut y = vec![CZERO; dd * dd];
    for i in 0..d {
        for j in 0..d {
            // y[b'][c][a][e'] = Σ_{c'} x[i][a][b'][c][c'] conj(Â_j[c',e'])
            y.iter_mut().for_each(|v| *v = CZERO);
            for a in 0..dim {
                for bp in 0..dim {
                    for c in 0..dim {
                        let xbase = (((i * dim + a) * dim + bp) * dim + c) * dim;
                        let ybase = ((bp * dim + c) * dim + a) * dim;
                        for cp in 0..dim {
                            let w = x[xbase + cp];
                            if w == CZERO {
                                continue;
                            }
                            let krow = &conj_ket[(j * dim + cp) * dim..(j * dim + cp + 1) * dim];
                            for (ep, kv) in krow.iter().enumerate() {
                                y[ybase + ep] += w * kv;
                            }
                        }
                    }
                }
            }
            // out[(i,a',b'),(j,c,e)] = Σ_{a,e'} y[b'][c][a][e'] rp[a'][e][a][e']
            for bp in 0..dim {
                for c in 0..dim {
                    let yrow = &y[(bp * dim + c) * dd..(bp * dim + c + 1) * dd];
                    for ap in 0..dim {
                        for e in 0..dim {
                            let rrow = &rp[(ap * dim + e) * dd..(ap * dim + e + 1) * dd];
                            let mut acc = CZERO;
                            for (yv, rv) in yrow.iter().zip(rrow) {
                                acc += yv * rv;
                            }
                            out[(i * dd + ap * dim + bp, j * dd + c * dim + e)] = acc;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Hamiltonian networks are stored in full (`[m][n]`) when they fit in
/// memory; otherwise only the sums over `n` needed for assembly are kept.
#[derive(Debug, Clone)]
pub enum HamNetworks {
    Full(Vec<Vec<CMatrix>>),
    Summed(Vec<CMatrix>),
}

/// All open networks of one backbone tensor on a ring of `N` sites.
#[derive(Debug, Clone)]
pub struct NetworkSet {
    pub n_sites: usize,
    pub phys: usize,
    pub bond: usize,
    /// `N₀ₘ`, indexed by `m`.
    pub norm: Vec<CMatrix>,
    pub ham: HamNetworks,
    /// `P₀ₘ` for the product operator, if requested.
    pub parity: Option<Vec<CMatrix>>,
}

impl NetworkSet {
    /// `Σ_n H₀ₙₘ`.
    pub fn ham_summed(&self, m: usize) -> CMatrix {
        match &self.ham {
            HamNetworks::Full(all) => {
                let mut acc = all[m][0].clone();
                for h in &all[m][1..] {
                    acc += h;
                }
                acc
            }
            HamNetworks::Summed(s) => s[m].clone(),
        }
    }

    pub fn ham_entry(&self, n: usize, m: usize) -> Option<&CMatrix> {
        match &self.ham {
            HamNetworks::Full(all) => all.get(m).and_then(|row| row.get(n)),
            HamNetworks::Summed(_) => None,
        }
    }
}

/// Bytes needed to hold the full network set in memory.
pub fn network_set_bytes(n_sites: usize, phys: usize, bond: usize, with_parity: bool) -> u64 {
    let dim = (phys * bond * bond) as u64;
    let per = dim * dim * 16;
    let n = n_sites as u64;
    per * (n * n + n + if with_parity { n } else { 0 })
}

/// Computes all norm and Hamiltonian networks (and parity networks when
/// `parity_op` is given). With `keep_full = false` the Hamiltonian networks
/// are summed over `n` as they are produced and handed to `sink`.
pub fn compute_network_set(
    a: &SiteTensor,
    h01: &CMatrix,
    parity_op: Option<&CMatrix>,
    n_sites: usize,
    keep_full: bool,
    mut sink: Option<&mut dyn FnMut(usize, usize, &CMatrix) -> Result<()>>,
) -> Result<NetworkSet> {
    let ctx = RingContext::new(a, n_sites)?;
    let terms = operator_terms(h01, a.phys_dim())?;
    let norm: Vec<CMatrix> = (0..n_sites)
        .into_par_iter()
        .map(|m| ctx.norm_network(m).map(|x| x.matrix))
        .collect::<Result<_>>()?;
    let parity = match parity_op {
        Some(op) => {
            let pctx = RingContext::with_product_operator(a, n_sites, op)?;
            Some((0..n_sites).into_par_iter().map(|m| pctx.norm_network(m).map(|x| x.matrix)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let mut full = Vec::with_capacity(if keep_full { n_sites } else { 0 });
    let mut summed = Vec::with_capacity(if keep_full { 0 } else { n_sites });
    for m in 0..n_sites {
        let row: Vec<CMatrix> = (0..n_sites)
            .into_par_iter()
            .map(|n| ctx.ham_network_terms(&terms, n, m).map(|x| x.matrix))
            .collect::<Result<_>>()?;
        if let Some(s) = sink.as_mut() {
            for (n, mat) in row.iter().enumerate() {
                s(m, n, mat)?;
            }
        }
        if keep_full {
            full.push(row);
        } else {
            let mut acc = row[0].clone();
            for x in &row[1..] {
                acc += x;
            }
            summed.push(acc);
        }
    }
    Ok(NetworkSet {
        n_sites,
        phys: a.phys_dim(),
        bond: a.bond_dim(),
        norm,
        ham: if keep_full { HamNetworks::Full(full) } else { HamNetworks::Summed(summed) },
        parity,
    })
}
