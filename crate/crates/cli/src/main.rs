mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conesheet::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Energy-scaling pipelines for thin conical sheets.
#[derive(Parser)]
#[command(name = "conesheet", version)]
struct Cli {
    /// Seed for every randomized perturbation and probe.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving the CSV and JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form ansatz energy over a list of thicknesses.
    AnsatzEnergy { config: PathBuf },
    /// Energies of one sampled surface.
    Sample { config: PathBuf },
    /// Minimize the discrete energy from a starting surface.
    Minimize { config: PathBuf },
    /// Geodesic polar coordinates and the assumption 1 report.
    Geodesics { config: PathBuf },
    /// Enclosed-curvature profile, deviation integrals and the f function.
    Curvature { config: PathBuf },
    /// Gauss-map degree raster.
    Degree { config: PathBuf },
    /// Isoperimetric residuals over radii and random perturbations.
    Isoperimetric { config: PathBuf },
    /// Scaling sweep over thicknesses.
    Sweep { config: PathBuf },
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    match &cli.command {
        Command::AnsatzEnergy { config } => commands::ansatz_energy_cmd(&config::load(config)?, out),
        Command::Sample { config } => commands::sample_cmd(&config::load(config)?, &mut rng, out),
        Command::Minimize { config } => commands::minimize_cmd(&config::load(config)?, &mut rng, out),
        Command::Geodesics { config } => commands::geodesics_cmd(&config::load(config)?, &mut rng, out),
        Command::Curvature { config } => commands::curvature_cmd(&config::load(config)?, &mut rng, out),
        Command::Degree { config } => commands::degree_cmd(&config::load(config)?, &mut rng, out),
        Command::Isoperimetric { config } => commands::isoperimetric_cmd(&config::load(config)?, &mut rng, out),
        Command::Sweep { config } => commands::sweep_cmd(&config::load(config)?, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
