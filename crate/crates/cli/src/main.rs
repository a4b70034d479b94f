//! Experiment runner for score-oriented multiclass training.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, SweepAxis};

#[derive(Parser)]
#[command(name = "multisol", version, about = "Train and evaluate score-oriented multiclass losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports, tables, and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds overriding the config's list, e.g. `0,1,2`.
    #[arg(long)]
    seeds: Option<String>,
    /// Maximum number of concurrently trained models.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl CommonArgs {
    fn seed_list(&self) -> Result<Option<Vec<u64>>, CliError> {
        self.seeds
            .as_deref()
            .map(|s| commands::parse_seeds(s).map_err(CliError::Config))
            .transpose()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed with the configured loss.
    Train(CommonArgs),
    /// Ablate the MultiSOL prior (alpha) or smoothing (lambda) against a
    /// cross-entropy baseline.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Which MultiSOL parameter to vary: alpha or lambda.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values, e.g. `1,5,10`.
        #[arg(long)]
        values: String,
    },
    /// Train every loss variant (CE, weighted CE, squared, MultiSOL x four
    /// scores) and tabulate all evaluation metrics.
    Scores(CommonArgs),
    /// Scan a barycentric threshold grid with a trained checkpoint and export
    /// the score surface plus prior log-density.
    Heatmap {
        /// Experiment config (JSON) describing the dataset.
        #[arg(long)]
        config: PathBuf,
        /// Trained model checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Grid subdivisions per simplex edge (0 = barycenter only).
        #[arg(long, default_value_t = 60)]
        grid_k: usize,
        /// Symmetric Dirichlet concentration for the log-density column.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(c) => {
            let seeds = c.seed_list()?;
            commands::cmd_train(&c.config, &c.out, seeds.as_deref(), c.jobs)
        }
        Command::Sweep { common: c, axis, values } => {
            let seeds = c.seed_list()?;
            let axis: SweepAxis = axis.parse().map_err(CliError::Config)?;
            let values = commands::parse_values(&values).map_err(CliError::Config)?;
            commands::cmd_sweep(&c.config, &c.out, seeds.as_deref(), c.jobs, axis, &values)
        }
        Command::Scores(c) => {
            let seeds = c.seed_list()?;
            commands::cmd_scores(&c.config, &c.out, seeds.as_deref(), c.jobs)
        }
        Command::Heatmap { config, checkpoint, out, grid_k, alpha } => {
            commands::cmd_heatmap(&config, &checkpoint, &out, grid_k, alpha)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
