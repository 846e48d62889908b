use std::path::{Path, PathBuf};
use std::time::Instant;

use blochmps::analysis::{compare_spectra, dispersion_as_spectrum, subspace_distance, AngleRow, Backbone, CompareReport};
use blochmps::excitations::{dispersion, heisenberg_split_dispersion, DispersionOptions, DispersionResult};
use blochmps::ground::{load_tensor, optimize_ground_tensor, save_tensor, GroundResult};
use blochmps::models::{heisenberg_transformed, ModelDescriptor, ModelSpec};
use blochmps::mps::cache::BuildOptions;
use blochmps::mps::network::compute_network_set;
use blochmps::mps::tensor::SiteTensor;
use blochmps::oracles::{ed_spectrum, ising_exact_spectrum, EdOptions, ExactSpectrum, Window};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExactMode, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Lib(blochmps::Error),
    Io(std::io::Error, PathBuf),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<blochmps::Error> for Failure {
    fn from(e: blochmps::Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        use blochmps::Error as E;
        match self {
            Failure::Config(_) | Failure::Io(..) => 2,
            Failure::Lib(e) => match e {
                E::MemoryBudget { .. } | E::DenseGuard { .. } => 4,
                E::NotHermitian { .. }
                | E::FullySingularMetric { .. }
                | E::NotPositiveSemidefinite { .. }
                | E::NoConvergence
                | E::DegenerateState { .. } => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(e, p) => write!(f, "{}: {e}", p.display()),
        }
    }
}

type Res<T> = std::result::Result<T, Failure>;

/// Wrapper written around every JSON output.
#[derive(Serialize, Deserialize)]
pub struct Envelope<T> {
    pub version: String,
    pub config_hash: String,
    pub command: String,
    pub data: T,
}

fn header(cfg_hash: &str, command: &str) -> Vec<String> {
    vec![format!("blochmps {VERSION} {command} config_hash={cfg_hash}")]
}

fn write_text(path: &Path, text: &str) -> Res<()> {
    std::fs::write(path, text).map_err(|e| Failure::Io(e, path.to_path_buf()))
}

fn write_json<T: Serialize>(path: &Path, cfg_hash: &str, command: &str, data: &T) -> Res<()> {
    let env = Envelope { version: VERSION.into(), config_hash: cfg_hash.into(), command: command.into(), data };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| Failure::Lib(e.into()))?;
    text.push('\n');
    write_text(path, &text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read_json(path: &Path) -> Res<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(e, path.to_path_buf()))?;
    serde_json::from_str(&text).map_err(|e| Failure::Lib(e.into()))
}

fn ground_opts(cfg: &RunConfig) -> blochmps::ground::GroundOptions {
    let mut o = cfg.optimizer.clone();
    o.seed = cfg.seed;
    o
}

#[derive(Serialize)]
struct GroundRun {
    model: ModelDescriptor,
    energy: f64,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    restart: usize,
    tensor: String,
    tensor_hash: String,
}

fn run_ground(model: &ModelSpec, cfg: &RunConfig, out: &Path) -> Res<GroundRun> {
    let t = Instant::now();
    let res: GroundResult = optimize_ground_tensor(model, cfg.bond, cfg.n_sites, &ground_opts(cfg))?;
    log::info!(
        "stage ground: {:.3} s, E = {:.12}, |grad| = {:.2e}, {} iterations",
        t.elapsed().as_secs_f64(),
        res.energy,
        res.grad_norm,
        res.iterations
    );
    if !res.converged {
        log::warn!("optimizer stopped before reaching the gradient tolerance");
    }
    let meta = serde_json::json!({
        "version": VERSION,
        "config_hash": cfg.hash(),
        "model": model.descriptor,
        "n_sites": cfg.n_sites,
        "energy": res.energy,
    });
    save_tensor(out, &res.a, Some(meta))?;
    log::info!("wrote {}", out.display());
    Ok(GroundRun {
        model: model.descriptor.clone(),
        energy: res.energy,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        converged: res.converged,
        restart: res.restart,
        tensor: out.to_string_lossy().into_owned(),
        tensor_hash: res.a.content_hash(),
    })
}

pub fn ground(cfg: &RunConfig) -> Res<()> {
    let dir = cfg.results_dir();
    let mut runs = Vec::new();
    if let Some(lambda) = cfg.split_lambda {
        // H′ − λP_y has the H′ ground state as its ground state; the same
        // backbone serves both parity runs
        let out = cfg.paths.tensor_out.clone().unwrap_or_else(|| dir.join("tensor.json"));
        runs.push(run_ground(&heisenberg_transformed(lambda, -1), cfg, &out)?);
    } else {
        let out = cfg.paths.tensor_out.clone().unwrap_or_else(|| dir.join("tensor.json"));
        runs.push(run_ground(&cfg.model.build()?, cfg, &out)?);
    }
    write_json(&dir.join("ground-summary.json"), &cfg.hash(), "ground", &runs)
}

fn required<'a>(p: &'a Option<PathBuf>, field: &str) -> Res<&'a PathBuf> {
    p.as_ref().ok_or_else(|| {
        Failure::Config(ConfigError { field: field.into(), message: "required for this command".into() })
    })
}

fn load(path: &Path) -> Res<SiteTensor> {
    Ok(load_tensor(path)?.0)
}

pub fn dispersion_cmd(cfg: &RunConfig) -> Res<()> {
    let opts = DispersionOptions {
        cache_dir: cfg.paths.cache_dir.clone(),
        build: BuildOptions { memory_budget: cfg.memory_budget, spill: cfg.spill },
    };
    let a = load(required(&cfg.paths.tensor_in, "paths.tensor_in")?)?;
    let res = if let Some(lambda) = cfg.split_lambda {
        let plus = match &cfg.paths.tensor_plus_in {
            Some(p) => load(p)?,
            None => a.clone(),
        };
        heisenberg_split_dispersion(&a, &plus, lambda, cfg.n_sites, cfg.branches, cfg.eps, &opts)?
    } else {
        dispersion(&cfg.model.build()?, &a, cfg.n_sites, cfg.branches, cfg.eps, &opts)?
    };
    log::info!(
        "stage networks: {:.3} s; stage solve: {:.3} s",
        res.timings.networks_s,
        res.timings.solve_s
    );
    for b in &res.blocks {
        if b.discarded != b.expected_discarded {
            log::warn!("k={}: discarded {} directions, expected {}", b.k, b.discarded, b.expected_discarded);
        }
    }
    let dir = cfg.results_dir();
    let h = cfg.hash();
    write_json(&dir.join("dispersion.json"), &h, "dispersion", &res)?;
    let csv = dir.join("dispersion.csv");
    write_text(&csv, &res.to_csv(&header(&h, "dispersion")))?;
    log::info!("wrote {}", csv.display());
    Ok(())
}

fn window(cfg: &RunConfig) -> Window {
    match (cfg.exact.levels, cfg.exact.cutoff) {
        (Some(n), _) => Window::Count(n),
        (None, Some(c)) => Window::Cutoff(c),
        _ => Window::All,
    }
}

pub fn exact(cfg: &RunConfig) -> Res<()> {
    let t = Instant::now();
    let spec = match cfg.exact.mode {
        ExactMode::Ed => ed_spectrum(&cfg.model.build()?, cfg.n_sites, &EdOptions { window: window(cfg), ..Default::default() })?,
        ExactMode::IsingAnalytic => match cfg.model {
            ModelDescriptor::Ising { g, .. } | ModelDescriptor::IsingXbasis { g } => {
                ising_exact_spectrum(g, cfg.n_sites, window(cfg))?
            }
            _ => {
                return Err(Failure::Config(ConfigError {
                    field: "exact.mode".into(),
                    message: "ising-analytic needs an Ising model".into(),
                }))
            }
        },
    };
    log::info!("stage exact: {:.3} s, {} levels", t.elapsed().as_secs_f64(), spec.levels.len());
    let dir = cfg.results_dir();
    let h = cfg.hash();
    write_json(&dir.join("exact.json"), &h, "exact", &spec)?;
    let csv = dir.join("exact.csv");
    write_text(&csv, &spec.to_csv(&header(&h, "exact")))?;
    log::info!("wrote {}", csv.display());
    Ok(())
}

fn read_dispersion(path: &Path) -> Res<DispersionResult> {
    let v = read_json(path)?;
    match v.get("command").and_then(|c| c.as_str()) {
        Some("dispersion") => serde_json::from_value(v["data"].clone()).map_err(|e| Failure::Lib(e.into())),
        _ => Err(Failure::Config(ConfigError {
            field: "--mps".into(),
            message: format!("{} is not a dispersion result", path.display()),
        })),
    }
}

fn read_reference(path: &Path) -> Res<ExactSpectrum> {
    let v = read_json(path)?;
    let data = v["data"].clone();
    match v.get("command").and_then(|c| c.as_str()) {
        Some("exact") => serde_json::from_value(data).map_err(|e| Failure::Lib(e.into())),
        Some("dispersion") => {
            let d: DispersionResult = serde_json::from_value(data).map_err(|e| Failure::Lib(e.into()))?;
            Ok(dispersion_as_spectrum(&d))
        }
        _ => Err(Failure::Config(ConfigError {
            field: "--exact".into(),
            message: format!("{} is neither an exact spectrum nor a dispersion result", path.display()),
        })),
    }
}

pub struct CompareArgs {
    pub mps: PathBuf,
    pub exact: PathBuf,
    pub bound_tol: f64,
    pub results_dir: PathBuf,
    /// Canonical-angle table; needs the run config with backbone paths.
    pub angles: Option<RunConfig>,
}

/// Lowest degenerate group at each momentum, against the same number of
/// variational branches.
fn angle_table(cfg: &RunConfig, res: &DispersionResult) -> Res<Vec<AngleRow>> {
    let model = cfg.model.build()?;
    if model.spectrum_key() != res.model {
        return Err(Failure::Config(ConfigError {
            field: "model".into(),
            message: "does not match the dispersion result".into(),
        }));
    }
    let minus = load(required(&cfg.paths.tensor_in, "paths.tensor_in")?)?;
    let plus = match (cfg.split_lambda, &cfg.paths.tensor_plus_in) {
        (Some(_), Some(p)) => Some(load(p)?),
        (Some(_), None) => Some(minus.clone()),
        (None, _) => None,
    };
    let backbone = match &plus {
        Some(p) => Backbone::Split { minus: &minus, plus: p },
        None => Backbone::Single(&minus),
    };
    let ed = ed_spectrum(&model, res.n_sites, &EdOptions { vectors: true, ..Default::default() })?;
    let vectors = ed.vectors.as_ref().expect("vectors requested");
    let mut rows = Vec::new();
    for block in &res.blocks {
        let idx: Vec<usize> = (0..ed.levels.len()).filter(|&i| ed.levels[i].k == block.k).collect();
        let Some(&first) = idx.first() else { continue };
        let size = ed.levels[first].degeneracy;
        if size > block.branches.len() {
            log::warn!("k={}: lowest group has {} states, only {} branches", block.k, size, block.branches.len());
            continue;
        }
        let exact: Vec<_> = idx.iter().take(size).map(|&i| vectors[i].clone()).collect();
        let branches: Vec<usize> = (0..size).collect();
        let distance = subspace_distance(res, backbone, block.k, &branches, &exact)?;
        rows.push(AngleRow { k: block.k, branches, distance });
    }
    Ok(rows)
}

pub fn compare(args: &CompareArgs) -> Res<CompareReport> {
    let res = read_dispersion(&args.mps)?;
    let reference = read_reference(&args.exact)?;
    if res.n_sites != reference.n_sites || res.model != reference.model {
        return Err(Failure::Config(ConfigError {
            field: "--exact".into(),
            message: format!(
                "reference (N={}, model {}) does not match result (N={}, model {})",
                reference.n_sites, reference.model, res.n_sites, res.model
            ),
        }));
    }
    let mut report = compare_spectra(&res, &reference, args.bound_tol)?;
    if let Some(cfg) = &args.angles {
        report.angles = angle_table(cfg, &res)?;
    }
    for r in report.rows.iter().filter(|r| r.branch == 0) {
        println!(
            "k={:>3}  E_mps={:>22.15e}  E_exact={:>22}  rel={}",
            r.k,
            r.e_mps,
            r.e_exact.map(|e| format!("{e:.15e}")).unwrap_or_else(|| "-".into()),
            r.rel.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into())
        );
    }
    for a in &report.angles {
        println!("k={:>3}  subspace distance {:.3e} ({} states)", a.k, a.distance, a.branches.len());
    }
    println!("bound violations: {}; max lowest-branch relative error: {:.3e}", report.violations, report.max_rel_lowest);
    let hash = {
        use sha2::{Digest, Sha256};
        let text = format!("{}|{}|{}", res.tensor_hash, reference.model, args.bound_tol);
        Sha256::digest(text.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    write_json(&args.results_dir.join("compare.json"), &hash, "compare", &report)?;
    let csv = args.results_dir.join("compare.csv");
    write_text(&csv, &report.to_csv(&header(&hash, "compare")))?;
    Ok(report)
}

#[derive(Serialize)]
struct BenchRow {
    bond: usize,
    seconds: f64,
}

/// Network-build timings for several bond dimensions on a random backbone.
pub fn bench(n_sites: usize, bonds: &[usize], repeats: usize, seed: u64, out: Option<&Path>) -> Res<()> {
    use rand::SeedableRng;
    let model = blochmps::models::ising_model(1.0);
    let mut rows = Vec::new();
    for &bond in bonds {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = blochmps::mps::transfer::normalize_dominant(&SiteTensor::random(2, bond, &mut rng))?.0;
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let t = Instant::now();
            compute_network_set(&a, &model.h01, None, n_sites, true, None)?;
            best = best.min(t.elapsed().as_secs_f64());
        }
        println!("N={n_sites} D={bond}: {best:.4} s");
        rows.push(BenchRow { bond, seconds: best });
    }
    for w in rows.windows(2) {
        let expo = (w[1].seconds / w[0].seconds).ln() / (w[1].bond as f64 / w[0].bond as f64).ln();
        println!("D {} -> {}: ratio {:.2}, effective exponent {:.2}", w[0].bond, w[1].bond, w[1].seconds / w[0].seconds, expo);
    }
    if let Some(out) = out {
        write_json(out, "-", "bench", &rows)?;
    }
    Ok(())
}
