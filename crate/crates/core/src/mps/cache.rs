//! On-disk cache for network sets.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "BMPSNETS"
//! version    u32      LAYOUT_VERSION
//! hlen       u64      length of the JSON header
//! header     hlen bytes, JSON-encoded `CacheHeader`
//! norm       N matrices
//! parity     N matrices (only if header.parity)
//! ham        N·N matrices ordered by m then n (header.ham_full), or
//!            N matrices Σ_n H₀ₙₘ ordered by m
//! ```
//!
//! Each matrix is `dim·dim` complex entries, row-major, every entry stored as
//! `(re: f64, im: f64)`, with `dim = d·D²`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{compute_network_set, network_set_bytes, HamNetworks, NetworkSet};
use super::tensor::{hex, SiteTensor};
use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix};

pub const LAYOUT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BMPSNETS";

/// Everything a cached network set depends on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub model_hash: String,
    pub tensor_hash: String,
    pub n_sites: usize,
    pub phys: usize,
    pub bond: usize,
    pub parity: bool,
}

impl CacheKey {
    pub fn file_name(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("cache key serializes"));
        h.update(LAYOUT_VERSION.to_le_bytes());
        format!("networks-{}.bin", &hex(&h.finalize())[..24])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheHeader {
    key: CacheKey,
    ham_full: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Bytes the in-memory network set may occupy.
    pub memory_budget: u64,
    /// Stream the Hamiltonian networks to disk and keep only their sums over
    /// `n` in memory when the full set does not fit.
    pub spill: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { memory_budget: 4 << 30, spill: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    /// Loaded from an existing file.
    Hit,
    /// Computed and written.
    Stored,
    /// Computed, no cache directory configured.
    Uncached,
}

fn write_matrix<W: Write>(w: &mut W, m: &CMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(m.len() * 16);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, dim: usize) -> Result<CMatrix> {
    let mut buf = vec![0u8; dim * dim * 16];
    r.read_exact(&mut buf)?;
    let mut m = CMatrix::zeros(dim, dim);
    for (idx, chunk) in buf.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        m[(idx / dim, idx % dim)] = c64(re, im);
    }
    Ok(m)
}

fn write_header<W: Write>(w: &mut W, header: &CacheHeader) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&LAYOUT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<CacheHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a network cache file".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != LAYOUT_VERSION {
        return Err(Error::Format(format!("cache layout version {version}, expected {LAYOUT_VERSION}")));
    }
    let mut l = [0u8; 8];
    r.read_exact(&mut l)?;
    let len = u64::from_le_bytes(l) as usize;
    if len > 1 << 20 {
        return Err(Error::Format("cache header too large".into()));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

/// Writes a complete in-memory network set.
pub fn write_network_set(path: &Path, key: &CacheKey, set: &NetworkSet) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        let ham_full = matches!(set.ham, HamNetworks::Full(_));
        write_header(&mut w, &CacheHeader { key: key.clone(), ham_full })?;
        for m in &set.norm {
            write_matrix(&mut w, m)?;
        }
        if let Some(p) = &set.parity {
            for m in p {
                write_matrix(&mut w, m)?;
            }
        }
        match &set.ham {
            HamNetworks::Full(all) => {
                for row in all {
                    for m in row {
                        write_matrix(&mut w, m)?;
                    }
                }
            }
            HamNetworks::Summed(s) => {
                for m in s {
                    write_matrix(&mut w, m)?;
                }
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a network set, returning `None` when the file belongs to a
/// different key. With `keep_full = false` a full file is folded into
/// per-`m` sums while streaming.
pub fn read_network_set(path: &Path, key: &CacheKey, keep_full: bool) -> Result<Option<NetworkSet>> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r)?;
    if &header.key != key {
        return Ok(None);
    }
    let n = key.n_sites;
    let dim = key.phys * key.bond * key.bond;
    let norm = (0..n).map(|_| read_matrix(&mut r, dim)).collect::<Result<Vec<_>>>()?;
    let parity = if key.parity {
        Some((0..n).map(|_| read_matrix(&mut r, dim)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let ham = if header.ham_full {
        let mut full = Vec::new();
        let mut summed = Vec::new();
        for _ in 0..n {
            let row = (0..n).map(|_| read_matrix(&mut r, dim)).collect::<Result<Vec<_>>>()?;
            if keep_full {
                full.push(row);
            } else {
                summed.push(row.into_iter().reduce(|a, b| a + b).expect("ring has sites"));
            }
        }
        if keep_full {
            HamNetworks::Full(full)
        } else {
            HamNetworks::Summed(summed)
        }
    } else {
        HamNetworks::Summed((0..n).map(|_| read_matrix(&mut r, dim)).collect::<Result<Vec<_>>>()?)
    };
    Ok(Some(NetworkSet { n_sites: n, phys: key.phys, bond: key.bond, norm, ham, parity }))
}

/// Decides whether the full set fits the budget. Errors when even the
/// summed form does not fit, or when spilling is disabled.
pub fn plan_storage(n_sites: usize, phys: usize, bond: usize, parity: bool, opts: &BuildOptions) -> Result<bool> {
    let full = network_set_bytes(n_sites, phys, bond, parity);
    if full <= opts.memory_budget {
        return Ok(true);
    }
    let dim = (phys * bond * bond) as u64;
    let summed = dim * dim * 16 * (n_sites as u64) * if parity { 3 } else { 2 };
    if opts.spill && summed <= opts.memory_budget {
        return Ok(false);
    }
    Err(Error::MemoryBudget { required: if opts.spill { summed } else { full }, budget: opts.memory_budget })
}

/// Loads the network set for `key` from `dir`, or computes it (writing it
/// back when a directory is given).
pub fn load_or_compute(
    dir: Option<&Path>,
    key: &CacheKey,
    a: &SiteTensor,
    h01: &CMatrix,
    parity_op: Option<&CMatrix>,
    opts: &BuildOptions,
) -> Result<(NetworkSet, CacheStatus)> {
    if key.n_sites == 0 || key.phys != a.phys_dim() || key.bond != a.bond_dim() || key.parity != parity_op.is_some() {
        return Err(Error::Invalid("cache key does not describe the given tensor".into()));
    }
    let keep_full = plan_storage(key.n_sites, key.phys, key.bond, key.parity, opts)?;
    let Some(dir) = dir else {
        let set = compute_network_set(a, h01, parity_op, key.n_sites, keep_full, None)?;
        return Ok((set, CacheStatus::Uncached));
    };
    std::fs::create_dir_all(dir)?;
    let path = dir.join(key.file_name());
    if path.exists() {
        match read_network_set(&path, key, keep_full) {
            Ok(Some(set)) => {
                log::info!("network cache hit: {}", path.display());
                return Ok((set, CacheStatus::Hit));
            }
            Ok(None) => log::warn!("cache file {} has a different key; recomputing", path.display()),
            Err(e) => log::warn!("unreadable cache file {} ({e}); recomputing", path.display()),
        }
    }
    if keep_full {
        let set = compute_network_set(a, h01, parity_op, key.n_sites, true, None)?;
        write_network_set(&path, key, &set)?;
        return Ok((set, CacheStatus::Stored));
    }
    // Spill: stream H₀ₙₘ to a side file while only sums stay in memory, then
    // splice it after the norm and parity blocks.
    let ham_path: PathBuf = path.with_extension("ham.partial");
    let set = {
        let mut w = BufWriter::new(File::create(&ham_path)?);
        let mut sink = |_m: usize, _n: usize, mat: &CMatrix| write_matrix(&mut w, mat);
        let set = compute_network_set(a, h01, parity_op, key.n_sites, false, Some(&mut sink))?;
        w.flush()?;
        set
    };
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_header(&mut w, &CacheHeader { key: key.clone(), ham_full: true })?;
        for m in &set.norm {
            write_matrix(&mut w, m)?;
        }
        if let Some(p) = &set.parity {
            for m in p {
                write_matrix(&mut w, m)?;
            }
        }
        std::io::copy(&mut BufReader::new(File::open(&ham_path)?), &mut w)?;
        w.flush()?;
    }
    std::fs::remove_file(&ham_path)?;
    std::fs::rename(&tmp, &path)?;
    log::info!("network set spilled to {}", path.display());
    Ok((set, CacheStatus::Stored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{heisenberg_transformed, pauli_y};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (SiteTensor, CMatrix, CacheKey) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = SiteTensor::random(2, 2, &mut rng);
        let model = heisenberg_transformed(0.4, 1);
        let key = CacheKey {
            model_hash: model.content_hash(),
            tensor_hash: a.content_hash(),
            n_sites: 4,
            phys: 2,
            bond: 2,
            parity: true,
        };
        (a, model.h01, key)
    }

    #[test]
    fn roundtrip_and_warm_hit() {
        let (a, h, key) = setup();
        let dir = tempfile::tempdir().unwrap();
        let py = pauli_y();
        let opts = BuildOptions::default();
        let (first, s1) = load_or_compute(Some(dir.path()), &key, &a, &h, Some(&py), &opts).unwrap();
        let (second, s2) = load_or_compute(Some(dir.path()), &key, &a, &h, Some(&py), &opts).unwrap();
        assert_eq!(s1, CacheStatus::Stored);
        assert_eq!(s2, CacheStatus::Hit);
        for m in 0..4 {
            assert_eq!(first.norm[m], second.norm[m]);
            assert_eq!(first.ham_summed(m), second.ham_summed(m));
            assert_eq!(first.parity.as_ref().unwrap()[m], second.parity.as_ref().unwrap()[m]);
            for n in 0..4 {
                assert_eq!(first.ham_entry(n, m), second.ham_entry(n, m));
            }
        }
    }

    #[test]
    fn foreign_key_is_not_reused() {
        let (a, h, key) = setup();
        let dir = tempfile::tempdir().unwrap();
        let set = compute_network_set(&a, &h, Some(&pauli_y()), 4, true, None).unwrap();
        let path = dir.path().join("x.bin");
        write_network_set(&path, &key, &set).unwrap();
        let mut other = key.clone();
        other.tensor_hash = "0".into();
        assert!(read_network_set(&path, &other, true).unwrap().is_none());
        assert_ne!(key.file_name(), other.file_name());
    }

    #[test]
    fn budget_refusal_and_spill() {
        let (a, h, key) = setup();
        let full = network_set_bytes(4, 2, 2, true);
        let tight = BuildOptions { memory_budget: full - 1, spill: false };
        match load_or_compute(None, &key, &a, &h, Some(&pauli_y()), &tight) {
            Err(Error::MemoryBudget { required, budget }) => {
                assert_eq!(required, full);
                assert_eq!(budget, full - 1);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
        let dir = tempfile::tempdir().unwrap();
        let spill = BuildOptions { memory_budget: full - 1, spill: true };
        let (spilled, _) = load_or_compute(Some(dir.path()), &key, &a, &h, Some(&pauli_y()), &spill).unwrap();
        assert!(matches!(spilled.ham, HamNetworks::Summed(_)));
        let reference = compute_network_set(&a, &h, Some(&pauli_y()), 4, true, None).unwrap();
        for m in 0..4 {
            assert!((spilled.ham_summed(m) - reference.ham_summed(m)).norm() < 1e-12);
        }
        // the spilled file holds the full set
        let path = dir.path().join(key.file_name());
        let full_back = read_network_set(&path, &key, true).unwrap().unwrap();
        assert_eq!(full_back.ham_entry(2, 1), reference.ham_entry(2, 1));
    }
}
