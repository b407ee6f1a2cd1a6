use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinn_cli::commands::{self, ExportArgs, FlopsArgs, TrainArgs};
use spinn_cli::error::CliError;

/// Separable physics-informed neural networks.
#[derive(Parser)]
#[command(name = "spinn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes metrics, checkpoints and a prediction grid.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Problem id (overrides the configuration).
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Continue from last.ckpt in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Report error metrics of a checkpoint on a uniform grid.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        problem: Option<String>,
        /// Points per axis.
        #[arg(long)]
        resolution: Option<usize>,
        /// Directory for grid.spgd.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a 2-d slice as CSV and PGM.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        problem: Option<String>,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// AXIS=VALUE with AXIS in x1..xd or t; pin all but two axes.
        #[arg(long = "pin")]
        pins: Vec<String>,
        #[arg(long, default_value_t = 0)]
        component: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "slice")]
        name: String,
    },
    /// Operation counts; without --arch prints the 64^3 reference pair.
    Flops {
        /// separable | monolithic
        #[arg(long)]
        arch: Option<String>,
        /// Points per axis.
        #[arg(long = "N", default_value_t = 64)]
        points: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Comma-separated widths, input first.
        #[arg(long)]
        layers: Option<String>,
        #[arg(long, default_value_t = 32)]
        rank: usize,
        #[arg(long, default_value_t = 1)]
        out_dim: usize,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long)]
        csv: bool,
    },
}

/// Evaluation runs on one thread; other values are accepted as an upper bound.
fn check_threads() -> Result<(), CliError> {
    match std::env::var("SPINN_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(CliError::Usage(format!("SPINN_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    check_threads()?;
    match cli.command {
        Command::Train {
            config,
            problem,
            seed,
            out,
            iterations,
            resume,
        } => commands::train(TrainArgs {
            config,
            problem,
            seed,
            out,
            iterations,
            resume,
        }),
        Command::Eval {
            checkpoint,
            problem,
            resolution,
            out,
        } => commands::eval(&checkpoint, problem.as_deref(), resolution, out.as_deref()),
        Command::Export {
            checkpoint,
            problem,
            resolution,
            pins,
            component,
            out,
            name,
        } => commands::export(ExportArgs {
            checkpoint,
            problem,
            resolution,
            pins,
            component,
            out,
            name,
        }),
        Command::Flops {
            arch,
            points,
            dim,
            layers,
            rank,
            out_dim,
            order,
            csv,
        } => {
            let report = commands::flops_report(&FlopsArgs {
                arch,
                points,
                dim,
                layers,
                rank,
                out_dim,
                order,
                csv,
            })?;
            print!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
