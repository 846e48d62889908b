mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CompareArgs, Failure};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "blochmps", version, about = "Excitation spectra of periodic spin chains from translation-invariant MPS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration; flags override its values
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the backbone tensor and write it to a tensor file
    Ground(Common),
    /// Momentum-resolved excitation energies on a stored backbone
    Dispersion(Common),
    /// Exact reference spectrum (exact diagonalization or the free-fermion Ising solution)
    Exact(Common),
    /// Compare a dispersion against a reference spectrum
    Compare {
        #[arg(long)]
        mps: PathBuf,
        #[arg(long)]
        exact: PathBuf,
        #[arg(long = "bound-tol", default_value_t = blochmps::analysis::BOUND_TOL)]
        bound_tol: f64,
        /// Add canonical-angle distances; needs the run config of the dispersion
        #[arg(long)]
        angles: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Time network construction for several bond dimensions
    Bench {
        #[arg(long = "n-sites", short = 'N', default_value_t = 12)]
        n_sites: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8])]
        bonds: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads(n: usize) {
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    init_threads(cfg.threads);
    log::info!("config hash {}", cfg.hash());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ground(c) => commands::ground(&load(&c)?),
        Command::Dispersion(c) => commands::dispersion_cmd(&load(&c)?),
        Command::Exact(c) => commands::exact(&load(&c)?),
        Command::Compare { mps, exact, bound_tol, angles, common } => {
            let results_dir = common.overrides.results_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            if !results_dir.is_dir() {
                return Err(Failure::Config(config::ConfigError {
                    field: "--results-dir".into(),
                    message: format!("directory {} does not exist", results_dir.display()),
                }));
            }
            let angles = if angles { Some(load(&common)?) } else { None };
            commands::compare(&CompareArgs { mps, exact, bound_tol, results_dir, angles }).map(|_| ())
        }
        Command::Bench { n_sites, bonds, repeats, seed, threads, out } => {
            init_threads(threads);
            commands::bench(n_sites, &bonds, repeats, seed, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
