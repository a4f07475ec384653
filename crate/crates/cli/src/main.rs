mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use storage_bidding::error::{Error, Result};

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "STORAGE_BIDDING_WORKERS";

#[derive(Parser)]
#[command(name = "storage-bidding", version, about = "Storage bid curves, withholding bounds and market simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
    /// Master seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write long-format CSV ready for heatmaps and line plots.
    #[arg(long)]
    pub emit_plot_data: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Value functions by backward induction over the forecasts.
    ValueFn(Common),
    /// Discharge and charge curves per period, with the deterministic baseline.
    Bids(Common),
    /// Price-cap withholding bounds per period and the expectation-cap bound.
    Bounds(Common),
    /// One real-time clearing.
    Clear(Common),
    /// Day-ahead commitment followed by a real-time day.
    Simulate(Common),
    /// Deviation, bounded, welfare or slope sweep.
    Sweep(Common),
    /// Compare submitted curves with the baseline and the bound.
    Audit(Common),
}

fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_workers()?;
    match cli.command {
        Command::ValueFn(c) => commands::value_fn(&c),
        Command::Bids(c) => commands::bids(&c),
        Command::Bounds(c) => commands::bounds(&c),
        Command::Clear(c) => commands::clear(&c),
        Command::Simulate(c) => commands::simulate(&c),
        Command::Sweep(c) => commands::sweep(&c),
        Command::Audit(c) => commands::audit(&c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
