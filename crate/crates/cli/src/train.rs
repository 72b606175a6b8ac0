use clap::{Args, Subcommand};
use serde::Serialize;

use vnode::nn::{mixing_experiment, Activation, Arch, MixingConfig, MixingRow, TrainConfig};

use crate::common::{csv_row, kebab, parse_arch, report, Failure};
use crate::Globals;

#[derive(Subcommand)]
pub enum TrainCommand {
    /// Fit the product of a path's endpoint features, one model per seed.
    Mixing(MixingArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct MixingArgs {
    #[arg(long, value_parser = parse_arch, default_value = "gcn-vn")]
    arch: Arch,
    #[arg(long, default_value_t = 12)]
    path_len: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Initialisations `seed, seed + 1, ..`.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    #[arg(long, default_value_t = 0.3)]
    step_size: f64,
    #[arg(long, value_parser = kebab::<Activation>, default_value = "relu")]
    activation: Activation,
}

#[derive(Serialize)]
struct MixingResult {
    rows: Vec<MixingRow>,
    mean_final_loss: f64,
}

pub fn run(cmd: TrainCommand, globals: &Globals) -> Result<(), Failure> {
    let TrainCommand::Mixing(a) = cmd;
    let cfg = MixingConfig {
        arch: a.arch,
        path_len: a.path_len,
        depth: a.depth,
        width: a.width,
        samples: a.samples,
        seeds: a.seeds,
        seed: globals.seed,
        activation: a.activation,
        train: TrainConfig {
            steps: a.steps,
            step_size: a.step_size,
            seed: globals.seed,
            ..TrainConfig::default()
        },
    };
    let rows = mixing_experiment(&cfg)?;
    let r = MixingResult {
        mean_final_loss: rows.iter().map(|r| r.final_loss).sum::<f64>() / rows.len().max(1) as f64,
        rows,
    };
    let csv = || {
        let mut s = csv_row(["seed", "initial_loss", "final_loss"].map(String::from));
        for row in &r.rows {
            s += &csv_row([row.seed.to_string(), row.initial_loss.to_string(), row.final_loss.to_string()]);
        }
        s
    };
    report(globals, "train mixing", &a, &r, Some(&csv))
}
