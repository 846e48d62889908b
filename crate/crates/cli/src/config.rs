use std::path::{Path, PathBuf};

use blochmps::excitations::DEFAULT_EPS;
use blochmps::ground::GroundOptions;
use blochmps::models::ModelDescriptor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelDescriptor,
    pub n_sites: usize,
    #[serde(default = "default_bond")]
    pub bond: usize,
    #[serde(default = "default_branches")]
    pub branches: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: GroundOptions,
    /// Parity-split strength λ for the Heisenberg workflow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_lambda: Option<f64>,
    #[serde(default)]
    pub exact: ExactConfig,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default = "default_budget")]
    pub memory_budget: u64,
    #[serde(default)]
    pub spill: bool,
    /// 0 uses all cores.
    #[serde(default)]
    pub threads: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Backbone for `dispersion`.
    pub tensor_in: Option<PathBuf>,
    /// Separate backbone for the parity −1 run of a split dispersion;
    /// defaults to `tensor_in`.
    pub tensor_plus_in: Option<PathBuf>,
    pub tensor_out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub results_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactMode {
    #[default]
    Ed,
    IsingAnalytic,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    #[serde(default)]
    pub mode: ExactMode,
    /// Keep only the lowest `levels` levels.
    pub levels: Option<usize>,
    /// Keep levels up to this far above the ground state.
    pub cutoff: Option<f64>,
}

fn default_bond() -> usize {
    4
}
fn default_branches() -> usize {
    1
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_seed() -> u64 {
    1
}
fn default_budget() -> u64 {
    4 << 30
}

/// Field-level configuration problem.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

/// Command-line overrides, applied on top of the JSON document.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Model name: ising | ising-xbasis | heisenberg | heisenberg-transformed
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sign: Option<i8>,
    #[arg(long = "n-sites", short = 'N')]
    pub n_sites: Option<usize>,
    #[arg(long, short = 'D')]
    pub bond: Option<usize>,
    #[arg(long, short = 'b')]
    pub branches: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long = "split-lambda")]
    pub split_lambda: Option<f64>,
    #[arg(long = "tensor-in")]
    pub tensor_in: Option<PathBuf>,
    #[arg(long = "tensor-plus-in")]
    pub tensor_plus_in: Option<PathBuf>,
    #[arg(long = "tensor-out")]
    pub tensor_out: Option<PathBuf>,
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long = "results-dir", short = 'o')]
    pub results_dir: Option<PathBuf>,
    #[arg(long = "memory-budget")]
    pub memory_budget: Option<u64>,
    #[arg(long)]
    pub spill: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Exact spectrum mode: ed | ising-analytic
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<f64>,
}

fn set(obj: &mut serde_json::Value, path: &[&str], v: serde_json::Value) {
    let mut cur = obj;
    for key in &path[..path.len() - 1] {
        if !cur.get(*key).is_some_and(|x| x.is_object()) {
            cur[*key] = serde_json::json!({});
        }
        cur = &mut cur[*key];
    }
    cur[path[path.len() - 1]] = v;
}

fn path_value(p: &Path) -> serde_json::Value {
    serde_json::Value::String(p.to_string_lossy().into_owned())
}

impl RunConfig {
    /// Reads the optional JSON document, applies overrides, validates.
    pub fn load(file: Option<&Path>, ov: &Overrides) -> Result<Self, ConfigError> {
        let mut doc = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| err("--config", format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| err("--config", format!("{}: {e}", p.display())))?
            }
            None => serde_json::json!({}),
        };
        if !doc.is_object() {
            return Err(err("--config", "top level must be a JSON object"));
        }
        use serde_json::json;
        if let Some(name) = &ov.model {
            let keep = doc.get("model").and_then(|m| m.get("name")).and_then(|n| n.as_str()) == Some(name.as_str());
            if !keep {
                doc["model"] = json!({});
            }
            set(&mut doc, &["model", "name"], json!(name));
        }
        let scalars: [(&[&str], Option<serde_json::Value>); 15] = [
            (&["model", "g"], ov.g.map(|x| json!(x))),
            (&["model", "lambda"], ov.lambda.map(|x| json!(x))),
            (&["model", "sign"], ov.sign.map(|x| json!(x))),
            (&["n_sites"], ov.n_sites.map(|x| json!(x))),
            (&["bond"], ov.bond.map(|x| json!(x))),
            (&["branches"], ov.branches.map(|x| json!(x))),
            (&["eps"], ov.eps.map(|x| json!(x))),
            (&["seed"], ov.seed.map(|x| json!(x))),
            (&["optimizer", "restarts"], ov.restarts.map(|x| json!(x))),
            (&["optimizer", "max_iters"], ov.max_iters.map(|x| json!(x))),
            (&["split_lambda"], ov.split_lambda.map(|x| json!(x))),
            (&["memory_budget"], ov.memory_budget.map(|x| json!(x))),
            (&["threads"], ov.threads.map(|x| json!(x))),
            (&["exact", "mode"], ov.mode.as_ref().map(|x| json!(x))),
            (&["exact", "levels"], ov.levels.map(|x| json!(x))),
        ];
        for (path, v) in scalars {
            if let Some(v) = v {
                set(&mut doc, path, v);
            }
        }
        if let Some(c) = ov.cutoff {
            set(&mut doc, &["exact", "cutoff"], json!(c));
        }
        if ov.spill {
            set(&mut doc, &["spill"], json!(true));
        }
        let paths: [(&str, &Option<PathBuf>); 5] = [
            ("tensor_in", &ov.tensor_in),
            ("tensor_plus_in", &ov.tensor_plus_in),
            ("tensor_out", &ov.tensor_out),
            ("cache_dir", &ov.cache_dir),
            ("results_dir", &ov.results_dir),
        ];
        for (key, p) in paths {
            if let Some(p) = p {
                set(&mut doc, &["paths", key], path_value(p));
            }
        }
        if doc.get("model").is_none() {
            return Err(err("model", "missing (set it in the config file or with --model)"));
        }
        if doc.get("n_sites").is_none() {
            return Err(err("n_sites", "missing (set it in the config file or with --n-sites)"));
        }
        let model: ModelDescriptor =
            serde_json::from_value(doc["model"].clone()).map_err(|e| err("model", e.to_string()))?;
        let mut rest = doc.clone();
        rest["model"] = serde_json::to_value(&model).expect("serializable model");
        let cfg: RunConfig = serde_json::from_value(rest).map_err(|e| err("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n_sites;
        if n < 2 {
            return Err(err("n_sites", format!("must be at least 2, got {n}")));
        }
        if self.bond == 0 {
            return Err(err("bond", "must be positive"));
        }
        if self.branches == 0 {
            return Err(err("branches", "must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(err("eps", format!("must lie in (0, 1), got {}", self.eps)));
        }
        match self.model {
            ModelDescriptor::Ising { g, .. } | ModelDescriptor::IsingXbasis { g } if !g.is_finite() => {
                return Err(err("model.g", "must be finite"));
            }
            ModelDescriptor::HeisenbergTransformed { sign, .. } if sign != 1 && sign != -1 => {
                return Err(err("model.sign", format!("must be +1 or -1, got {sign}")));
            }
            ModelDescriptor::HeisenbergTransformed { .. } if n % 2 == 1 => {
                return Err(err("n_sites", format!("the rotated Heisenberg chain needs an even ring, got {n}")));
            }
            _ => {}
        }
        if let Some(l) = self.split_lambda {
            if !matches!(self.model, ModelDescriptor::Heisenberg) {
                return Err(err("split_lambda", "only applies to model `heisenberg`"));
            }
            if !(l > 0.0) {
                return Err(err("split_lambda", format!("must be positive, got {l}")));
            }
            if n % 2 == 1 {
                return Err(err("n_sites", format!("parity splitting needs an even ring, got {n}")));
            }
        }
        if self.exact.levels.is_some() && self.exact.cutoff.is_some() {
            return Err(err("exact", "set at most one of `levels` and `cutoff`"));
        }
        let checks: [(&str, &Option<PathBuf>, bool); 5] = [
            ("paths.tensor_in", &self.paths.tensor_in, true),
            ("paths.tensor_plus_in", &self.paths.tensor_plus_in, true),
            ("paths.results_dir", &self.paths.results_dir, false),
            ("paths.cache_dir", &self.paths.cache_dir, false),
            ("paths.tensor_out", &self.paths.tensor_out.as_ref().and_then(|p| parent_dir(p)), false),
        ];
        for (field, p, is_file) in checks {
            if let Some(p) = p {
                if is_file && !p.is_file() {
                    return Err(err(field, format!("file {} does not exist", p.display())));
                }
                if !is_file && !p.is_dir() {
                    return Err(err(field, format!("directory {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn results_dir(&self) -> PathBuf {
        self.paths.results_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// Hash over everything that determines numerical output; paths and the
    /// thread count are excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable config");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("paths");
            obj.remove("threads");
            obj.remove("spill");
            obj.remove("memory_budget");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parent_dir(p: &Path) -> Option<PathBuf> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => Some(d.to_path_buf()),
        _ => None,
    }
}
