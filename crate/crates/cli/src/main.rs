//! `lamespec`: experiment runner for the lame-spectral toolkit.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::commands::CliError;
use crate::config::ExperimentConfig;

/// Thread count for parallel work; unset means rayon's default.
const THREADS_ENV: &str = "LAMESPEC_THREADS";

#[derive(Parser)]
#[command(name = "lamespec", version, about = "Spectral experiments for perturbed Lamé operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Output directory, overriding `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Helmholtz decomposition of a vector field with identity checks.
    Decompose(Common),
    /// Empirical resolvent norms between weighted or Lebesgue spaces.
    ResolventCheck(Common),
    /// Discrete eigenvalues of the perturbed operator.
    Spectrum(Common),
    /// Birman-Schwinger check at given points or at computed eigenvalues.
    BsCheck(Common),
    /// Potential norms.
    Norms(Common),
    /// Eigenvalue enclosure reports for the configured bounds.
    Enclosure(Common),
    /// Empirical constants over a random ensemble.
    Calibrate(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Decompose(c) => ("decompose", c),
            Command::ResolventCheck(c) => ("resolvent-check", c),
            Command::Spectrum(c) => ("spectrum", c),
            Command::BsCheck(c) => ("bs-check", c),
            Command::Norms(c) => ("norms", c),
            Command::Enclosure(c) => ("enclosure", c),
            Command::Calibrate(c) => ("calibrate", c),
        }
    }
}

fn init_threads() -> Result<usize, CliError> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::config(THREADS_ENV, format!("expected a positive integer, got `{raw}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(THREADS_ENV, e))?;
    }
    Ok(rayon::current_num_threads())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let threads = init_threads()?;
    let (name, common) = cli.command.parts();
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out_dir = match &common.out {
        Some(dir) => dir.clone(),
        None => cfg.resolve(&cfg.output),
    };
    let out = output::OutputDir::create(out_dir)?;
    match cli.command {
        Command::Decompose(_) => commands::decompose(&cfg, &out)?,
        Command::ResolventCheck(_) => commands::resolvent_check(&cfg, &out)?,
        Command::Spectrum(_) => commands::spectrum(&cfg, &out)?,
        Command::BsCheck(_) => commands::bs_check(&cfg, &out)?,
        Command::Norms(_) => commands::norms(&cfg, &out)?,
        Command::Enclosure(_) => commands::enclosure(&cfg, &out)?,
        Command::Calibrate(_) => commands::calibrate(&cfg, &out)?,
    }
    let meta = output::Metadata {
        schema_version: output::SCHEMA_VERSION,
        command: name,
        tool_version: env!("CARGO_PKG_VERSION"),
        config: common.config.display().to_string(),
        seed: cfg.seed,
        started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        threads,
    };
    out.write_json("metadata.json", &meta)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
