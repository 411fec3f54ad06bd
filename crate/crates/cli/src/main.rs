//! `weylsampl`: reproducible sampling and eigenvalue-counting experiments.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "weylsampl",
    version,
    about = "Bandlimited sampling and eigenvalue counting on compact manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalues of the Laplace-Beltrami operator up to a threshold.
    Spectrum(Invocation),
    /// Greedy metric lattice with packing and covering diagnostics.
    Lattice(Invocation),
    /// Frame bounds and reconstruction for a band on a lattice.
    Sample(Invocation),
    /// Heat kernel diagonal, traces and Gaussian bound fit.
    Heat(Invocation),
    /// Eigenvalue counts against lattice cardinalities over a band grid.
    WeylScan(Invocation),
    /// Cotangent Laplacian eigenvalues of a triangle mesh.
    MeshEig(Invocation),
    /// Empirical lattice scale factor for a band.
    Gamma(Invocation),
}

#[derive(Debug, clap::Args)]
struct Invocation {
    /// JSON config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: RunConfig,
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Core(weylsampl::Error),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<weylsampl::Error> for CliError {
    fn from(e: weylsampl::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, inv) = match cli.command {
        Command::Spectrum(i) => ("spectrum", i),
        Command::Lattice(i) => ("lattice", i),
        Command::Sample(i) => ("sample", i),
        Command::Heat(i) => ("heat", i),
        Command::WeylScan(i) => ("weyl-scan", i),
        Command::MeshEig(i) => ("mesh-eig", i),
        Command::Gamma(i) => ("gamma", i),
    };
    let base = match &inv.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.overlay(inv.settings);
    cfg.validate()?;
    let env = std::env::var("WEYLSAMPL_THREADS").ok();
    if let Some(n) = config::resolve_threads(cfg.threads, env.as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(format!("cannot start thread pool: {e}")))?;
    }
    let prov = output::Provenance::new(name, &cfg);
    eprintln!("{}", prov.header_line());
    let out = match name {
        "spectrum" => commands::spectrum(&cfg)?,
        "lattice" => commands::lattice(&cfg)?,
        "sample" => commands::sample(&cfg)?,
        "heat" => commands::heat(&cfg)?,
        "weyl-scan" => commands::weyl_scan(&cfg)?,
        "mesh-eig" => commands::mesh_eig(&cfg)?,
        "gamma" => commands::gamma(&cfg)?,
        _ => unreachable!("subcommand table"),
    };
    output::write(&cfg, &prov, out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
