use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod io;

use commands::Run;
use config::{DataMode, ExperimentConfig};
use error::{CliError, CliResult};

/// Operator estimation, spectra and reconstruction from snapshot data.
#[derive(Debug, Parser)]
#[command(name = "jetedmd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Experiment TOML; defaults apply to every missing field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sampling seed (overrides `sampling.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write snapshot pairs in the configured data mode.
    Sample(Wrap),
    /// Write flow samples `(x, phi^Ts(x))`.
    Flow(Wrap),
    /// Write finite-difference velocities along simulated trajectories.
    Velocities(Wrap),
    /// Write the truncated operator matrix at each base point.
    Estimate(Wrap),
    /// Write estimated, EDMD, KDMD and theoretical eigenvalues.
    Spectrum(Wrap),
    /// Evaluate eigenfunctions on a grid.
    Eigenfunctions(Wrap),
    /// Evaluate the reconstructed map or vector field on a grid.
    Reconstruct(Wrap),
    /// Iterate or integrate the reconstructed dynamics.
    Predict(Wrap),
    /// Hausdorff distance and greedy matching between two spectrum files.
    CompareSpectra(CompareArgs),
    /// Error against truncation order and sample size for the Ricker map.
    RickerStudy(Wrap),
}

#[derive(Debug, Args)]
struct Wrap {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// First spectrum CSV (overrides `compare.a`).
    #[arg(long)]
    a: Option<PathBuf>,
    /// Second spectrum CSV (overrides `compare.b`).
    #[arg(long)]
    b: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Flow(_) => "flow",
            Command::Velocities(_) => "velocities",
            Command::Estimate(_) => "estimate",
            Command::Spectrum(_) => "spectrum",
            Command::Eigenfunctions(_) => "eigenfunctions",
            Command::Reconstruct(_) => "reconstruct",
            Command::Predict(_) => "predict",
            Command::CompareSpectra(_) => "compare-spectra",
            Command::RickerStudy(_) => "ricker-study",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::CompareSpectra(c) => &c.common,
            Command::Sample(w)
            | Command::Flow(w)
            | Command::Velocities(w)
            | Command::Estimate(w)
            | Command::Spectrum(w)
            | Command::Eigenfunctions(w)
            | Command::Reconstruct(w)
            | Command::Predict(w)
            | Command::RickerStudy(w) => &w.common,
        }
    }
}

fn setup(common: &Common) -> CliResult<Run> {
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(CliError::config("--threads", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::config("--threads", e.to_string()))?;
    }
    let (mut cfg, base) = match &common.config {
        Some(p) => (ExperimentConfig::load(p)?, p.parent().map(PathBuf::from).unwrap_or_default()),
        None => (ExperimentConfig::default(), PathBuf::new()),
    };
    if let Some(s) = common.seed {
        cfg.sampling.seed = s;
    }
    // hash before paths are made absolute so it does not depend on location
    let prov = io::Provenance { config_hash: cfg.hash(), seed: cfg.sampling.seed };
    cfg.resolve_paths(&base);
    cfg.validate()?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output.clone());
    Ok(Run::new(cfg, prov, out))
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    let mut r = setup(cli.command.common())?;
    log::info!("{} -> {}", cli.command.name(), r.out.display());
    match &cli.command {
        Command::Sample(_) => r.sample(None)?,
        Command::Flow(_) => r.sample(Some(DataMode::Flow))?,
        Command::Velocities(_) => r.sample(Some(DataMode::FiniteDifference))?,
        Command::Estimate(_) => r.estimate()?,
        Command::Spectrum(_) => r.spectrum()?,
        Command::Eigenfunctions(_) => r.eigenfunctions()?,
        Command::Reconstruct(_) => r.reconstruct()?,
        Command::Predict(_) => r.predict()?,
        Command::CompareSpectra(c) => {
            r.compare(c.a.clone(), c.b.clone())?;
        }
        Command::RickerStudy(_) => r.ricker_study()?,
    }
    r.finish(cli.command.name())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
