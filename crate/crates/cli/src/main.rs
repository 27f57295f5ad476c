mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use commands::Run;
use config::RunConfig;
use error::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "objcrop", version, about = "Object-aware crop pretraining lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run config; unspecified fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stage (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory; all inputs and outputs live under it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override one config field, e.g. `--set train.lr=0.01`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset and split it into train/val.
    SynthGen,
    /// Fit the objectness model on the training split.
    BingTrain,
    /// Cache proposals for every image.
    Propose,
    /// Write sample view pairs for inspection.
    CropDump,
    /// Contrastive pretraining.
    Pretrain {
        /// Continue from the run's checkpoint if there is one.
        #[arg(long)]
        resume: bool,
    },
    /// Linear probe on frozen features.
    Probe,
    /// View-overlap statistics per strategy.
    Overlap,
    /// Pretrain + probe over a parameter grid.
    Sweep,
    /// Proposal throughput.
    Bench,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.sets, cli.seed)?;
    let r = Run { cfg, out: cli.out };
    match cli.command {
        Command::SynthGen => r.synth_gen(),
        Command::BingTrain => r.bing_train(),
        Command::Propose => r.propose(),
        Command::CropDump => r.crop_dump(),
        Command::Pretrain { resume } => r.pretrain(resume),
        Command::Probe => r.probe(),
        Command::Overlap => r.overlap(),
        Command::Sweep => r.sweep(),
        Command::Bench => r.bench(),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            let err = CliError::config(first);
            eprintln!("{}", err.to_json_line());
            std::process::exit(err.kind.exit_code());
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{}", e.to_json_line());
        std::process::exit(e.kind.exit_code());
    }
}
