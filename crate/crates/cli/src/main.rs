//! cascade-lab: a reproducible experiment driver for random multiplicative
//! cascade measures on self-similar sets. One subcommand per experiment
//! kind; all randomness flows from a single master seed through stable
//! sub-seed derivation, so identical configs reproduce identical tables.
//!
//! Exit codes: 0 success, 2 config error, 3 extinction or rejection cap,
//! 4 numeric failure.

mod config;
mod experiments;
mod tables;

use cascade_core::error::Error;
use clap::{Args, Parser, Subcommand};
use config::Kind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

pub const THREADS_ENV: &str = "CASCADE_LAB_THREADS";

#[derive(Parser)]
#[command(
    name = "cascade-lab",
    version,
    about = "Experiments on random cascade measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the weight model, report dimensions and group classification.
    Validate(RunArgs),
    /// Realize cascades and track level-by-level martingale masses.
    Simulate(RunArgs),
    /// Entropy curve, entropy dimension and the exact-dimensionality check.
    Dims(RunArgs),
    /// Dimension profile over projection frames with the constancy check.
    Project(RunArgs),
    /// Projection/slice dimension conservation residual.
    Conserve(RunArgs),
    /// Survival frequency, martingale levels and survivor box dimension.
    Percolate(RunArgs),
    /// Pinned-distance image dimension and distance-set box dimension.
    Distances(RunArgs),
    /// Expected projected entropy dimension E_q over a grid of q values.
    #[command(name = "eq-scan")]
    EqScan(RunArgs),
    /// Re-run one experiment over a single gridded parameter.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config value.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: CASCADE_LAB_THREADS, then logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Validate(a) => (Kind::Validate, a),
        Command::Simulate(a) => (Kind::Simulate, a),
        Command::Dims(a) => (Kind::Dims, a),
        Command::Project(a) => (Kind::Project, a),
        Command::Conserve(a) => (Kind::Conserve, a),
        Command::Percolate(a) => (Kind::Percolate, a),
        Command::Distances(a) => (Kind::Distances, a),
        Command::EqScan(a) => (Kind::EqScan, a),
        Command::Sweep(a) => (Kind::Sweep, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigInvalid { .. }
        | Error::InvalidModel(_)
        | Error::MultipleGrids(_)
        | Error::DimensionMismatch(_)
        | Error::NotARotation(_)
        | Error::InvalidWord { .. }
        | Error::WrongClassification(_)
        | Error::CapExceeded { .. } => 2,
        Error::Extinct { .. } | Error::Subcritical { .. } => 3,
        _ => 4,
    }
}

fn fail(e: Error) -> u8 {
    eprintln!("error: {e}");
    exit_code(&e)
}

fn init_threads(flag: Option<usize>) {
    let from_env = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        if n > 0 {
            // A second initialization in the same process is harmless.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn run(kind: Kind, args: &RunArgs) -> Result<(), u8> {
    init_threads(args.threads);
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", args.config.display());
        2u8
    })?;
    let raw_table: toml::Table = text.parse().map_err(|e| {
        eprintln!("config error: {e}");
        2u8
    })?;
    let raw = config::parse(&text).map_err(fail)?;
    let out_override = args.out.as_ref().map(|p| p.to_string_lossy().into_owned());
    let resolved = config::resolve(kind, &raw, args.seed, out_override).map_err(fail)?;

    let started = Instant::now();
    let output = match kind {
        Kind::Sweep => experiments::run_sweep(&resolved, &raw_table),
        _ => experiments::run(&resolved),
    }
    .map_err(fail)?;
    let wall = started.elapsed().as_secs_f64();

    let echo = toml::to_string(&resolved.echo()).map_err(|e| {
        eprintln!("error: cannot serialize resolved config: {e}");
        4u8
    })?;
    let version = format!("cascade-lab v{}", env!("CARGO_PKG_VERSION"));
    tables::write_outputs(
        Path::new(&resolved.out),
        kind.name(),
        &version,
        &echo,
        &output,
        wall,
    )
    .map_err(|e| {
        eprintln!("error: writing outputs to {}: {e}", resolved.out);
        4u8
    })?;
    for (name, value) in &output.scalars {
        println!("{name} = {value}");
    }
    Ok(())
}
