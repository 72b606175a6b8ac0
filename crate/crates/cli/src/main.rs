mod common;
mod filters;
mod graph;
mod sensitivity;
mod spectral;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use common::Failure;

#[derive(Parser)]
#[command(name = "vnode", version, about = "Virtual-node spectral, sensitivity and filter reports")]
struct Cli {
    /// Seed for generators, initialisation and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load graphs.
    #[command(subcommand)]
    Graph(graph::GraphCommand),
    /// Spectra, commute times and the effect of a virtual node.
    #[command(subcommand)]
    Spectral(spectral::SpectralCommand),
    /// Layer Jacobians, attention statistics and mixing.
    #[command(subcommand)]
    Sensitivity(sensitivity::SensitivityCommand),
    /// Polynomial filters of the linear models.
    #[command(subcommand)]
    Filters(filters::FiltersCommand),
    /// Training experiments.
    #[command(subcommand)]
    Train(train::TrainCommand),
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct Globals {
    pub seed: u64,
    pub format: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let globals = Globals {
        seed: cli.seed,
        format: cli.format,
        out: cli.out,
    };
    match cli.command {
        Command::Graph(c) => graph::run(c, &globals),
        Command::Spectral(c) => spectral::run(c, &globals),
        Command::Sensitivity(c) => sensitivity::run(c, &globals),
        Command::Filters(c) => filters::run(c, &globals),
        Command::Train(c) => train::run(c, &globals),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
