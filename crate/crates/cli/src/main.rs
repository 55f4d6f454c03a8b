use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use kforge::Scheme;

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "kforge", version, about = "Kähler-Einstein metrics on toric Fano surfaces")]
struct Cli {
    /// `key = value` run file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rays, moment polygon, area, symmetry order and section counts.
    PolytopeInfo(RunArgs),
    /// Runs one balanced-type scheme and writes its trace.
    Iterate(RunArgs),
    /// The four-scheme comparison at fixed rank and budget.
    Table(RunArgs),
    /// The Ricci iteration as real Monge-Ampère solves on a grid.
    RealMa(RunArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Polygon file (one ray per line) or one of `hexagon`, `p2`, `blowup`.
    #[arg(long)]
    pub polygon: Option<String>,
    /// balanced | canonical | ricci_outer | refined_balanced | refined_canonical
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub r: Option<u32>,
    /// Iteration budget (outer steps).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Inner steps per outer step of `ricci_outer`.
    #[arg(long)]
    pub inner_iters: Option<usize>,
    /// Cloud resolution, or grid spacing for `real-ma`.
    #[arg(long)]
    pub grid_res: Option<f64>,
    /// Cloud integration radius, or grid half-width for `real-ma`.
    #[arg(long)]
    pub grid_radius: Option<f64>,
    /// Fixed-point tolerance, or Newton tolerance for `real-ma`.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Aubin parameter for `real-ma`.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "KFORGE_THREADS")]
    pub threads: Option<usize>,
    /// Write the weights of every step.
    #[arg(long)]
    pub dump_weights: bool,
    /// Steps at which to write σ heatmaps (0 is the initial metric).
    #[arg(long, value_delimiter = ',')]
    pub heatmap_at: Vec<usize>,
    /// Record wall-clock time in the trace; off keeps traces byte-reproducible.
    #[arg(long)]
    pub timing: bool,
    /// Weights file to cross-validate the `real-ma` limit against (rank `--r`).
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<bool> {
    let (cmd, mut args) = match cli.command {
        Command::PolytopeInfo(a) => ("polytope-info", a),
        Command::Iterate(a) => ("iterate", a),
        Command::Table(a) => ("table", a),
        Command::RealMa(a) => ("real-ma", a),
    };
    if let Some(path) = &cli.config {
        args.merge(&config::load(path)?)?;
    }
    commands::with_threads(args.threads, || match cmd {
        "polytope-info" => commands::polytope_info(&args),
        "iterate" => commands::iterate(&args),
        "table" => commands::table(&args),
        _ => commands::real_ma(&args),
    })?
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
