use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, ValueEnum};
use fieldslab::config::ExperimentConfig;
use fieldslab::emit::Format;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    ExactCheck,
    HydroSweep,
    FluctSweep,
    DualCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::ExactCheck => "exact-check",
            Command::HydroSweep => "hydro-sweep",
            Command::FluctSweep => "fluct-sweep",
            Command::DualCheck => "dual-check",
        }
    }
}

/// Simulation and exact checks for particle systems with factorized duality.
#[derive(Debug, Parser)]
#[command(name = "fieldslab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: &Cli) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        anyhow::ensure!(n >= 1, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let (report, files) = fieldslab::run_and_emit(cli.command.name(), &cfg, &cli.out, cli.format)?;
    for f in &files {
        eprintln!("wrote {}", f.display());
    }
    Ok(report.passed.unwrap_or(true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}: tolerance exceeded", cli.command.name());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
