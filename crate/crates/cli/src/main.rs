//! Command-line front end for the spin-reversal interferometry engine.
//!
//! Each invocation runs one experiment: parse (or default) a config, hand it
//! to the runner, and report where the artifacts landed. Exit codes: 0 when
//! every output was written and every fit converged, 2 when outputs were
//! written but a fit failed to converge, 1 on any error.

mod config;
mod runner;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind};
use runner::RunError;

#[derive(Parser)]
#[command(
    name = "spinsim",
    version,
    about = "Spin-manifold field-reversal interferometry simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment description (TOML); built-in defaults when absent.
    #[arg(long, global = true, env = "SPINSIM_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's output.dir.
    #[arg(long, global = true, env = "SPINSIM_OUT")]
    out: Option<PathBuf>,
    /// Seed override for stochastic experiments.
    #[arg(long, global = true, env = "SPINSIM_SEED")]
    seed: Option<u64>,
    /// Scan worker threads (default: one per CPU).
    #[arg(long, global = true, env = "SPINSIM_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Resonant-drive population oscillation scan
    Rabi,
    /// Ramsey fringe versus detuning for the configured field schedule
    Ramsey,
    /// Evolve one manifold through a reversal and classify its phase
    Reverse,
    /// Rate a schedule's reversal speed against the minimum Zeeman gap
    Adiabaticity,
    /// Fringe visibility across a list of field floors
    Sweep,
    /// Phase-class stability over randomly perturbed reversal paths
    Robustness,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Rabi => ExperimentKind::Rabi,
            Command::Ramsey => ExperimentKind::RamseyScan,
            Command::Reverse => ExperimentKind::ReversalPhase,
            Command::Adiabaticity => ExperimentKind::AdiabaticityReport,
            Command::Sweep => ExperimentKind::VisibilitySweep,
            Command::Robustness => ExperimentKind::RobustnessSuite,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: outputs written, but at least one fit did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool, RunError> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|source| RunError::Io { path: path.clone(), source })?;
            let cfg = parse_config(&text)?;
            if cfg.kind != kind {
                return Err(
                    ConfigError::KindMismatch { config: cfg.kind, subcommand: kind }.into()
                );
            }
            cfg
        }
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        // scans fan out through the global pool; a second build attempt in
        // the same process is harmless and ignored
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }

    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let manifest = runner::run_experiment(&cfg, &out_dir)?;
    println!(
        "{} artifact(s) in {} (config {})",
        manifest.outputs.len() + 1,
        out_dir.display(),
        &manifest.config_hash[..12]
    );
    Ok(manifest.fits_converged)
}
