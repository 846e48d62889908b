//! Variational ground state within the translation-invariant MPS manifold.
//!
//! The energy `E(A) = ⟨φ_A|H|φ_A⟩/⟨φ_A|φ_A⟩` is minimized over a single site
//! tensor. Gradients come from the same open-network machinery as the
//! excitation code: removing one conjugated tensor from the ring.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, CVector, C64};
use crate::models::ModelSpec;
use crate::mps::network::{operator_terms, RingContext};
use crate::mps::tensor::SiteTensor;
use crate::mps::transfer::normalize_dominant;

const NORM_FLOOR: f64 = 1e-14;

/// Energy and `∂E/∂Ā` (derivative with respect to the conjugated tensor).
#[derive(Debug, Clone)]
pub struct EnergyGradient {
    pub energy: f64,
    pub gradient: CVector,
}

struct Evaluator<'a> {
    model: &'a ModelSpec,
    n_sites: usize,
    terms: Vec<(CMatrix, CMatrix)>,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a ModelSpec, n_sites: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::Invalid(format!("ring needs at least two sites, got {n_sites}")));
        }
        Ok(Self { model, n_sites, terms: operator_terms(&model.h01, model.d)? })
    }

    fn check(&self, a: &SiteTensor) -> Result<()> {
        if a.phys_dim() != self.model.d {
            return Err(Error::DimensionMismatch(format!(
                "tensor has d={}, model has d={}",
                a.phys_dim(),
                self.model.d
            )));
        }
        Ok(())
    }

    /// Works on a copy rescaled to unit dominant transfer eigenvalue and
    /// returns the scale factor used.
    fn normalized(&self, a: &SiteTensor) -> Result<(SiteTensor, f64, RingContext, f64)> {
        self.check(a)?;
        let (an, f) = normalize_dominant(a)?;
        let ctx = RingContext::new(&an, self.n_sites)?;
        let z = ctx.powers().get(self.n_sites).trace().re;
        if !(z > NORM_FLOOR) {
            return Err(Error::DegenerateState { norm: z });
        }
        Ok((an, f, ctx, z))
    }

    fn energy(&self, a: &SiteTensor) -> Result<f64> {
        let (an, _, ctx, z) = self.normalized(a)?;
        let n = self.n_sites;
        let mut f = c64(0.0, 0.0);
        let rest = ctx.powers().get(n - 2);
        for (l, r) in &self.terms {
            let el = crate::mps::transfer::transfer_matrix(&an, Some(l))?.0;
            let er = crate::mps::transfer::transfer_matrix(&an, Some(r))?.0;
            f += (el * er * rest).trace();
        }
        f *= c64(n as f64, 0.0);
        if let Some(p) = &self.model.perturbation {
            let eo = crate::mps::transfer::transfer_matrix(&an, Some(&p.op))?;
            f += eo.trace_power(n) * p.strength;
        }
        Ok(f.re / z)
    }

    fn energy_gradient(&self, a: &SiteTensor) -> Result<EnergyGradient> {
        let (an, scale, ctx, z) = self.normalized(a)?;
        let n = self.n_sites;
        let dim = an.len();
        let mut dh = CVector::zeros(dim);
        for l in 0..n {
            for (lo, ro) in &self.terms {
                dh += ctx.bra_environment(&[(l, lo.clone()), ((l + 1) % n, ro.clone())])?;
            }
        }
        if let Some(p) = &self.model.perturbation {
            let pctx = RingContext::with_product_operator(&an, n, &p.op)?;
            dh += pctx.bra_environment(&[])? * c64(p.strength, 0.0);
        }
        let dz = ctx.bra_environment(&[])?;
        let v = an.to_vector();
        // vec(A)† dh = ⟨φ|H|φ⟩ and vec(A)† dz = ⟨φ|φ⟩ (one site's share times N)
        let f = v.dotc(&dh).re;
        let energy = f / z;
        let nf = c64(n as f64, 0.0);
        let grad = (dh * nf - dz * (nf * energy)) * c64(scale / z, 0.0);
        Ok(EnergyGradient { energy, gradient: grad })
    }
}

/// `⟨φ_A|H|φ_A⟩ / ⟨φ_A|φ_A⟩` on a ring of `n_sites`.
pub fn rayleigh_energy(a: &SiteTensor, model: &ModelSpec, n_sites: usize) -> Result<f64> {
    Evaluator::new(model, n_sites)?.energy(a)
}

/// Energy together with `∂E/∂Ā`. The gradient with respect to the real
/// parameters `(Re A, Im A)` is `(2 Re g, 2 Im g)`.
pub fn energy_and_gradient(a: &SiteTensor, model: &ModelSpec, n_sites: usize) -> Result<EnergyGradient> {
    Evaluator::new(model, n_sites)?.energy_gradient(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lbfgs,
    GradientDescent,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GroundOptions {
    pub max_iters: usize,
    /// Stop when the real gradient norm, measured at unit Frobenius norm,
    /// falls below this.
    pub grad_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub method: Method,
    /// Restrict to real symmetric matrices `A_i`.
    pub real_symmetric: bool,
    pub history: usize,
}

impl Default for GroundOptions {
    fn default() -> Self {
        Self {
            max_iters: 3000,
            grad_tol: 1e-8,
            restarts: 5,
            seed: 1,
            method: Method::Lbfgs,
            real_symmetric: false,
            history: 12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundResult {
    pub a: SiteTensor,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the restart that produced this result.
    pub restart: usize,
}

/// Maps real optimization parameters to a site tensor.
#[derive(Debug, Clone, Copy)]
enum Param {
    Complex { d: usize, bond: usize },
    RealSymmetric { d: usize, bond: usize },
}

impl Param {
    fn len(&self) -> usize {
        match *self {
            Param::Complex { d, bond } => 2 * d * bond * bond,
            Param::RealSymmetric { d, bond } => d * bond * (bond + 1) / 2,
        }
    }

    fn to_tensor(&self, x: &[f64]) -> SiteTensor {
        match *self {
            Param::Complex { d, bond } => {
                let half = d * bond * bond;
                let data = (0..half).map(|j| c64(x[j], x[half + j])).collect();
                SiteTensor::new(d, bond, data).expect("shape fixed by parametrization")
            }
            Param::RealSymmetric { d, bond } => {
                let mut t = SiteTensor::zeros(d, bond);
                let mut k = 0;
                for i in 0..d {
                    for a in 0..bond {
                        for b in a..bond {
                            t.set(i, a, b, c64(x[k], 0.0));
                            t.set(i, b, a, c64(x[k], 0.0));
                            k += 1;
                        }
                    }
                }
                t
            }
        }
    }

    fn from_tensor(&self, t: &SiteTensor) -> Vec<f64> {
        match *self {
            Param::Complex { .. } => {
                let mut x: Vec<f64> = t.data().iter().map(|z| z.re).collect();
                x.extend(t.data().iter().map(|z| z.im));
                x
            }
            Param::RealSymmetric { d, bond } => {
                let mut x = Vec::with_capacity(self.len());
                for i in 0..d {
                    for a in 0..bond {
                        for b in a..bond {
                            x.push(0.5 * (t.get(i, a, b).re + t.get(i, b, a).re));
                        }
                    }
                }
                x
            }
        }
    }

    /// Real gradient from `∂E/∂Ā`.
    fn pull_back(&self, g: &CVector) -> Vec<f64> {
        match *self {
            Param::Complex { .. } => {
                let mut out: Vec<f64> = g.iter().map(|z| 2.0 * z.re).collect();
                out.extend(g.iter().map(|z| 2.0 * z.im));
                out
            }
            Param::RealSymmetric { d, bond } => {
                let at = |i: usize, a: usize, b: usize| g[(i * bond + a) * bond + b].re * 2.0;
                let mut out = Vec::with_capacity(self.len());
                for i in 0..d {
                    for a in 0..bond {
                        for b in a..bond {
                            out.push(if a == b { at(i, a, b) } else { at(i, a, b) + at(i, b, a) });
                        }
                    }
                }
                out
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Energy and real gradient at `x`, with `x` rescaled to unit norm first so
/// that the reported gradient norm is scale free.
fn eval_param(ev: &Evaluator, p: &Param, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let eg = ev.energy_gradient(&p.to_tensor(x))?;
    Ok((eg.energy, p.pull_back(&eg.gradient)))
}

/// Runs one local optimization from `start`.
pub fn optimize_from(model: &ModelSpec, start: &SiteTensor, n_sites: usize, opts: &GroundOptions) -> Result<GroundResult> {
    let ev = Evaluator::new(model, n_sites)?;
    ev.check(start)?;
    let (d, bond) = (start.phys_dim(), start.bond_dim());
    let p = if opts.real_symmetric { Param::RealSymmetric { d, bond } } else { Param::Complex { d, bond } };
    let mut x = p.from_tensor(start);
    let nx = norm(&x);
    if !(nx > 0.0) {
        return Err(Error::DegenerateState { norm: nx });
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let (mut e, mut g) = eval_param(&ev, &p, &x)?;
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = norm(&g) < opts.grad_tol;
    let mut gd_step = 1.0;
    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let dir: Vec<f64> = match opts.method {
            Method::Lbfgs => lbfgs_direction(&g, &s_hist, &y_hist),
            Method::GradientDescent => g.iter().map(|v| -v).collect(),
        };
        let mut slope = dot(&dir, &g);
        let dir = if slope >= 0.0 {
            // not a descent direction: drop curvature history
            s_hist.clear();
            y_hist.clear();
            let d: Vec<f64> = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
            d
        } else {
            dir
        };
        let mut alpha = match opts.method {
            Method::Lbfgs if !s_hist.is_empty() => 1.0,
            Method::Lbfgs => (0.1 / norm(&dir)).min(1.0),
            Method::GradientDescent => gd_step,
        };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            if let Ok((et, gt)) = eval_param(&ev, &p, &trial) {
                if et <= e + 1e-4 * alpha * slope {
                    accepted = Some((trial, et, gt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, et, gt)) = accepted else {
            log::debug!("line search failed at iteration {iterations}");
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        if opts.method == Method::GradientDescent {
            gd_step = (alpha * 2.0).min(1e3);
        }
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let decrease = e - et;
        x = trial;
        e = et;
        g = gt;
        if dot(&s, &y) > 1e-16 * norm(&s) * norm(&y) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            if s_hist.len() > opts.history {
                s_hist.pop_front();
                y_hist.pop_front();
            }
        }
        // energy is scale invariant; keep |x| = 1 so gradients stay comparable
        let nx = norm(&x);
        if (nx - 1.0).abs() > 0.25 {
            x.iter_mut().for_each(|v| *v /= nx);
            g.iter_mut().for_each(|v| *v *= nx);
            s_hist.clear();
            y_hist.clear();
        }
        let gn = norm(&g) * norm(&x);
        converged = gn < opts.grad_tol;
        if !converged && decrease.abs() <= 1e-15 * e.abs().max(1.0) && s_hist.is_empty() {
            break;
        }
    }
    let grad_norm = norm(&g) * norm(&x);
    let (a, _) = normalize_dominant(&p.to_tensor(&x))?;
    if !converged {
        log::warn!("ground-state optimization stopped after {iterations} iterations, gradient norm {grad_norm:.3e}");
    }
    Ok(GroundResult { a, energy: e, grad_norm, iterations, converged, restart: 0 })
}

fn lbfgs_direction(g: &[f64], s_hist: &VecDeque<Vec<f64>>, y_hist: &VecDeque<Vec<f64>>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    for j in (0..k).rev() {
        let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
        alphas[j] = rho * dot(&s_hist[j], &q);
        for (qi, yi) in q.iter_mut().zip(&y_hist[j]) {
            *qi -= alphas[j] * yi;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for j in 0..k {
        let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
        let beta = rho * dot(&y_hist[j], &q);
        for (qi, si) in q.iter_mut().zip(&s_hist[j]) {
            *qi += (alphas[j] - beta) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Random starting tensor for restart `restart`, scaled to unit dominant
/// transfer eigenvalue.
pub fn initial_tensor(d: usize, bond: usize, seed: u64, restart: usize, real_symmetric: bool) -> Result<SiteTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
    let t = if real_symmetric {
        SiteTensor::random_real_symmetric(d, bond, &mut rng)
    } else {
        SiteTensor::random(d, bond, &mut rng)
    };
    Ok(normalize_dominant(&t)?.0)
}

/// Best of `opts.restarts` independent optimizations from random starts.
/// Restarts run in parallel; the result depends only on the seed.
pub fn optimize_ground_tensor(model: &ModelSpec, bond: usize, n_sites: usize, opts: &GroundOptions) -> Result<GroundResult> {
    if bond == 0 {
        return Err(Error::Invalid("bond dimension must be at least 1".into()));
    }
    let restarts = opts.restarts.max(1);
    let runs: Vec<Result<GroundResult>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = initial_tensor(model.d, bond, opts.seed, r, opts.real_symmetric)?;
            let mut res = optimize_from(model, &start, n_sites, opts)?;
            res.restart = r;
            Ok(res)
        })
        .collect();
    let mut best: Option<GroundResult> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(r) => {
                log::debug!("restart {}: energy {:.12} after {} iterations", r.restart, r.energy, r.iterations);
                if best.as_ref().is_none_or(|b| r.energy < b.energy) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::NoConvergence))
}

/// `∂E/∂Ā` by central differences on the real parameters, for tests and
/// diagnostics.
pub fn finite_difference_gradient(a: &SiteTensor, model: &ModelSpec, n_sites: usize, step: f64) -> Result<CVector> {
    let ev = Evaluator::new(model, n_sites)?;
    let mut out = CVector::zeros(a.len());
    for j in 0..a.len() {
        let mut parts = [0.0; 2];
        for (slot, dir) in [c64(1.0, 0.0), c64(0.0, 1.0)].into_iter().enumerate() {
            let mut plus = a.clone();
            plus.data_mut()[j] += dir * step;
            let mut minus = a.clone();
            minus.data_mut()[j] -= dir * step;
            parts[slot] = (ev.energy(&plus)? - ev.energy(&minus)?) / (2.0 * step);
        }
        // ∂E/∂Ā = (∂_x + i ∂_y)/2
        out[j] = C64::new(parts[0], parts[1]) * 0.5;
    }
    Ok(out)
}

// --- tensor files ------------------------------------------------------------

pub const TENSOR_FORMAT: &str = "blochmps-tensor";
pub const TENSOR_VERSION: u32 = 1;
pub const TENSOR_LAYOUT: &str = "i*D^2+a*D+b";

/// Self-describing JSON tensor file. `entries` holds `[re, im]` pairs in
/// `layout` order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TensorFile {
    pub format: String,
    pub version: u32,
    pub d: usize,
    #[serde(rename = "D")]
    pub bond: usize,
    pub layout: String,
    pub entries: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl TensorFile {
    pub fn new(a: &SiteTensor, meta: Option<serde_json::Value>) -> Self {
        Self {
            format: TENSOR_FORMAT.into(),
            version: TENSOR_VERSION,
            d: a.phys_dim(),
            bond: a.bond_dim(),
            layout: TENSOR_LAYOUT.into(),
            entries: a.data().iter().map(|z| [z.re, z.im]).collect(),
            meta,
        }
    }

    pub fn tensor(&self) -> Result<SiteTensor> {
        if self.format != TENSOR_FORMAT {
            return Err(Error::Format(format!("not a tensor file (format {:?})", self.format)));
        }
        if self.version != TENSOR_VERSION {
            return Err(Error::Format(format!("unsupported tensor file version {}", self.version)));
        }
        if self.layout != TENSOR_LAYOUT {
            return Err(Error::Format(format!("unknown layout {:?}", self.layout)));
        }
        SiteTensor::new(self.d, self.bond, self.entries.iter().map(|&[re, im]| c64(re, im)).collect())
    }
}

pub fn save_tensor(path: &std::path::Path, a: &SiteTensor, meta: Option<serde_json::Value>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&TensorFile::new(a, meta))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_tensor(path: &std::path::Path) -> Result<(SiteTensor, Option<serde_json::Value>)> {
    let file: TensorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok((file.tensor()?, file.meta))
}
