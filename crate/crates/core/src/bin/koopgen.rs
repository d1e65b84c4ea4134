//! Command-line harness: data generation, generator learning, system
//! identification, benchmark tables, mu sweeps, and Zubov
//! region-of-attraction runs, all seeded and machine-readable.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure in all
//! requested cells.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use koopgen::bench::{
    self, BenchConfig, BenchError, BenchMethod, Preset, SweepConfig, ZubovRunConfig,
};
use koopgen::rtm::LearnedGenerator;
use koopgen::sysid;
use koopgen::systems::{
    builtin_system, integrate, recast_field, sample_initial_conditions, write_trajectory_csv,
    IntegratorOptions,
};

#[derive(Parser)]
#[command(
    name = "koopgen",
    about = "Learn Koopman generators from trajectory snapshots (resolvent-type method with FDM/KLM/SINDy baselines)",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Preset scale: paper (published sizes) or desk (laptop scale)
    #[arg(long)]
    preset: Option<Preset>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate trajectories of a built-in system and export them as CSV
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Learn a generator matrix and write the model JSON
    Learn {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Recover the vector field from a learned model
    Identify {
        /// Learned model JSON (from `learn`)
        #[arg(long)]
        model: PathBuf,
        /// Output path for the identified system JSON
        #[arg(long, default_value = "identified.json")]
        out: PathBuf,
    },
    /// Run the benchmark table over (system, gamma, method) cells
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated method list override (RTM,SRTM,FDM,KLM,SINDY)
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<BenchMethod>>,
        /// Comma-separated gamma list override
        #[arg(long, value_delimiter = ',')]
        gamma: Option<Vec<f64>>,
        /// Comma-separated systems (used with --preset when no config file)
        #[arg(long, value_delimiter = ',')]
        systems: Option<Vec<String>>,
    },
    /// Sweep mu over a grid and record the weight RMSE per (gamma, mu)
    SweepMu {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',')]
        gamma: Option<Vec<f64>>,
    },
    /// Learn a generator, solve the Zubov equation, extract the RoA
    Zubov {
        #[command(flatten)]
        common: CommonArgs,
        /// System name when no config file is given
        #[arg(long)]
        system: Option<String>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SimulateConfig {
    system: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default = "default_m")]
    m: usize,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_rtol")]
    rtol: f64,
    #[serde(default = "default_atol")]
    atol: f64,
    #[serde(default)]
    recast: bool,
}

fn default_m() -> usize {
    100
}
fn default_horizon() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    50.0
}
fn default_seed() -> u64 {
    42
}
fn default_rtol() -> f64 {
    1e-10
}
fn default_atol() -> f64 {
    1e-12
}

#[derive(Debug)]
enum AppError {
    Config(String),
    AllCellsFailed,
    Other(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "config: {m}"),
            AppError::AllCellsFailed => write!(f, "every requested cell failed numerically"),
            AppError::Other(m) => f.write_str(m),
        }
    }
}

impl From<BenchError> for AppError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(m) => AppError::Config(m),
            BenchError::AllCellsFailed => AppError::AllCellsFailed,
            other => AppError::Other(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                AppError::Config(_) => ExitCode::from(2),
                AppError::AllCellsFailed => ExitCode::from(3),
                AppError::Other(_) => ExitCode::FAILURE,
            }
        }
    }
}

fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, AppError> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&body).map_err(|e| {
        AppError::Config(format!(
            "cannot parse {}: {e} (line {}, column {})",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Simulate { common } => {
            let mut cfg: SimulateConfig = match &common.config {
                Some(p) => load_config(p)?,
                None => {
                    return Err(AppError::Config("simulate requires --config".into()));
                }
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let mut spec = builtin_system(&cfg.system, &cfg.params)
                .map_err(|e| AppError::Config(e.to_string()))?;
            if cfg.recast {
                spec = recast_field(&spec);
            }
            let gamma_count = (cfg.gamma * cfg.horizon).round() as usize;
            if gamma_count == 0 {
                return Err(AppError::Config("gamma * T must be >= 1".into()));
            }
            let times: Vec<f64> = (0..=gamma_count)
                .map(|k| k as f64 * cfg.horizon / gamma_count as f64)
                .collect();
            let ics = sample_initial_conditions(&spec.domain, cfg.m, cfg.seed);
            let opts = IntegratorOptions {
                rtol: cfg.rtol,
                atol: cfg.atol,
                ..Default::default()
            };
            std::fs::create_dir_all(&common.out).map_err(|e| AppError::Other(e.to_string()))?;
            for (i, x0) in ics.iter().enumerate() {
                let traj = integrate(&spec, x0, &times, &opts)
                    .map_err(|e| AppError::Other(format!("trajectory {i}: {e}")))?;
                let path = common.out.join(format!("traj_{i:04}.csv"));
                let mut file =
                    std::fs::File::create(&path).map_err(|e| AppError::Other(e.to_string()))?;
                write_trajectory_csv(&traj, &mut file)
                    .map_err(|e| AppError::Other(e.to_string()))?;
            }
            println!("wrote {} trajectories to {}", cfg.m, common.out.display());
            Ok(())
        }
        Command::Learn { common } => {
            let mut cfg: bench::LearnRunConfig = match &common.config {
                Some(p) => load_config(p)?,
                None => return Err(AppError::Config("learn requires --config".into())),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let out = bench::run_learn(&cfg)?;
            std::fs::create_dir_all(&common.out).map_err(|e| AppError::Other(e.to_string()))?;
            let path = common.out.join(format!("model_{}.json", cfg.system));
            std::fs::write(&path, out.generator.to_json().unwrap())
                .map_err(|e| AppError::Other(e.to_string()))?;
            for w in &out.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Identify { model, out } => {
            let body = std::fs::read_to_string(&model)
                .map_err(|e| AppError::Config(format!("cannot read model: {e}")))?;
            let gen = LearnedGenerator::from_json(&body)
                .map_err(|e| AppError::Config(format!("cannot parse model: {e}")))?;
            let sys = sysid::recover_field(&gen).map_err(|e| AppError::Other(e.to_string()))?;
            if let Some(truth) =
                sysid::true_weights(&gen.provenance.system, &BTreeMap::new(), &gen.dictionary)
            {
                if let Ok(rmse) = sysid::rmse_weights(&sys.coefficients, &truth) {
                    println!("weight RMSE vs {} truth: {rmse:.6e}", gen.provenance.system);
                }
            }
            std::fs::write(&out, serde_json::to_string_pretty(&sys).unwrap())
                .map_err(|e| AppError::Other(e.to_string()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Bench {
            common,
            method,
            gamma,
            systems,
        } => {
            let mut cfg: BenchConfig = match (&common.config, &systems) {
                (Some(p), _) => load_config(p)?,
                (None, Some(list)) => {
                    BenchConfig::from_preset(common.preset.unwrap_or_default(), list)
                }
                (None, None) => {
                    return Err(AppError::Config(
                        "bench requires --config or --systems with --preset".into(),
                    ))
                }
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(p) = common.preset {
                cfg.preset = p;
            }
            if let Some(methods) = method {
                for e in &mut cfg.entries {
                    e.methods = Some(methods.clone());
                }
            }
            if let Some(g) = gamma {
                for e in &mut cfg.entries {
                    e.gamma = Some(g.clone());
                }
            }
            let report = bench::run_bench(&cfg, Some(&common.out))?;
            println!(
                "wrote {} ({} cells, {} failed)",
                common.out.join("metrics.csv").display(),
                report.total_cells,
                report.failed_cells
            );
            Ok(())
        }
        Command::SweepMu { common, gamma } => {
            let mut cfg: SweepConfig = match &common.config {
                Some(p) => load_config(p)?,
                None => SweepConfig::default_vdp(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(p) = common.preset {
                cfg.preset = p;
            }
            if let Some(g) = gamma {
                cfg.entry.gamma = Some(g);
            }
            if cfg.mu_grid.is_empty() {
                return Err(AppError::Config("mu grid is empty".into()));
            }
            let report = bench::run_sweep(&cfg, Some(&common.out))?;
            let best = report
                .rows
                .iter()
                .min_by(|a, b| a.rmse_weights.total_cmp(&b.rmse_weights))
                .unwrap();
            println!(
                "wrote {} ({} rows; best mu = {} with weight RMSE {:.3e})",
                common.out.join("sweep_mu.csv").display(),
                report.rows.len(),
                best.mu,
                best.rmse_weights
            );
            Ok(())
        }
        Command::Zubov { common, system } => {
            let mut cfg: ZubovRunConfig = match &common.config {
                Some(p) => load_config(p)?,
                None => ZubovRunConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(s) = system {
                cfg.system = Some(s);
            }
            let (report, _) = bench::run_zubov(&cfg, Some(&common.out))?;
            println!(
                "system {}: equilibrium {:?} (|f| = {:.3e}), residual RMS {:.3e}, RoA {}/{} cells",
                report.system,
                report.equilibrium,
                report.equilibrium_residual,
                report.residual_rms,
                report.roa_cells,
                report.lattice_cells
            );
            Ok(())
        }
    }
}
