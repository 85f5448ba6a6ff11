//! `gosdpca`: run simulation studies, rolling forecast experiments and
//! Diebold–Mariano comparisons from JSON configurations.
//!
//! Exit status is 0 on success, 2 for configuration errors and 3 for runtime
//! failures. Errors are reported as a JSON object on standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gosdpca::experiment::{dm_from_files, load_config, run_experiment, threads_from_env, ExperimentConfig, Mode};
use gosdpca::io::write_series_csv;
use gosdpca::{generate, DgpConfig, Error};

#[derive(Parser)]
#[command(name = "gosdpca", version, about = "GO-sdPCA forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study on a simulated design.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Write artifacts here instead of the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Rolling-window forecast evaluation on a CSV dataset.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Diebold–Mariano test on two forecast files; prints JSON.
    Dm {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1)]
        h: usize,
    },
    /// Writes one simulated panel as CSV.
    ExportDgp {
        /// A design (`dgp_id`, `n`, …) or an experiment config with a `dgp` section.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the planted parameters as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn read_experiment(path: &Path, mode: Mode, output_dir: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(path).map_err(|e| Failure::Config(e.to_string()))?;
    if cfg.mode != mode {
        return Err(Failure::Config(format!("config mode is {:?}, expected {mode:?}", cfg.mode)));
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = std::path::absolute(&dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn read_dgp(path: &Path) -> Result<DgpConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let dgp = if value.get("dgp_id").is_some() {
        serde_json::from_value::<DgpConfig>(value).map_err(|e| Failure::Config(e.to_string()))?
    } else {
        let cfg = load_config(path).map_err(|e| Failure::Config(e.to_string()))?;
        let dgp = cfg.dgp.ok_or_else(|| Failure::Config("config has no dgp section".into()))?;
        dgp.with_seed(cfg.base_seed)
    };
    dgp.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(dgp)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = threads_from_env().map_err(|e| Failure::Config(e.to_string()))? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { config, output_dir } => {
            let cfg = read_experiment(&config, Mode::Simulate, output_dir)?;
            let out = run_experiment(&cfg)?;
            eprintln!("wrote {} summary rows to {}", out.summary.len(), cfg.output_dir.display());
        }
        Command::Forecast { config, output_dir } => {
            let cfg = read_experiment(&config, Mode::Forecast, output_dir)?;
            let out = run_experiment(&cfg)?;
            eprintln!("wrote {} summary rows to {}", out.summary.len(), cfg.output_dir.display());
        }
        Command::Dm { a, b, h } => {
            if h == 0 {
                return Err(Failure::Config("h must be at least 1".into()));
            }
            let (result, _, _) = dm_from_files(&a, &b, h)?;
            println!("{}", serde_json::to_string_pretty(&result).expect("plain struct"));
        }
        Command::ExportDgp { config, out, truth } => {
            let dgp = read_dgp(&config)?;
            let panel = generate(&dgp)?;
            write_series_csv(&panel.series, &out, None)?;
            if let Some(path) = truth {
                let json = serde_json::to_string(&panel.truth).expect("plain struct");
                std::fs::write(&path, json).map_err(|e| Failure::Runtime(e.to_string()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (kind, message, code) = match failure {
                Failure::Config(m) => ("config", m, 2),
                Failure::Runtime(m) => ("runtime", m, 3),
            };
            eprintln!("{}", serde_json::json!({ "error": { "kind": kind, "message": message } }));
            ExitCode::from(code)
        }
    }
}
