//! Command-line entry point: dataset synthesis, flow computation,
//! training, scoring and evaluation as subcommands over one config file.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "flowgan",
    about = "Cross-channel anomaly detection for static-camera video",
    version
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the configured synthetic dataset in the UCSD layout.
    Synth,
    /// Compute dense optical flow for every frame pair (.flo files).
    Flow {
        /// Also write color-encoded flow PNGs.
        #[arg(long)]
        png: bool,
    },
    /// Train the translation networks and write a checkpoint.
    Train {
        /// Continue from an existing checkpoint for another `epochs` epochs.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score test clips: heat maps and per-clip score manifests.
    Score {
        /// Checkpoint path (default: <out>/checkpoint.fgar).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the configured experiment and emit the report.
    Eval,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config <file> is required"))?;
    RunConfig::load(path, cli.seed, cli.out.clone())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are successful exits; everything else is usage.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    // Config problems are usage errors (exit 1), before any side effects.
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Synth => commands::cmd_synth(&config),
        Command::Flow { png } => commands::cmd_flow(&config, *png),
        Command::Train { resume } => commands::cmd_train(&config, resume.as_deref()),
        Command::Score { checkpoint } => commands::cmd_score(&config, checkpoint.as_deref()),
        Command::Eval => commands::cmd_eval(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
