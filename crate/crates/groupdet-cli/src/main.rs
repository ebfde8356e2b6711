//! `groupdet` — reproducible pipeline runs driven by a TOML config.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.

mod commands;
mod config;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use groupdet_core::Error;

#[derive(Parser)]
#[command(name = "groupdet", version, about = "UI layer group detection pipeline")]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted-key overrides, e.g. --set model.lr0=0.005
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus in the draft JSON schema.
    Synth,
    /// Ingest drafts, slice into square windows, split, write COCO datasets.
    Slice,
    /// Train a detector and checkpoint the best validation-AP weights.
    Train,
    /// Evaluate a checkpoint on one split.
    Eval,
    /// Run single-image inference.
    Predict {
        #[arg(long)]
        image: PathBuf,
        /// JSON list of {"content", "bbox": [x_min,y_min,x_max,y_max]} records.
        #[arg(long)]
        texts: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw detection overlays onto an image.
    Render {
        #[arg(long)]
        image: PathBuf,
        /// Detections JSON as produced by `predict`.
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidSpec(_) => 2,
        Error::DivergenceDetected { .. } => 4,
        _ => 3,
    }
}

fn run(cli: &Cli) -> groupdet_core::Result<()> {
    let config = config::load_config(cli.config.as_deref(), &cli.sets)?;
    match &cli.command {
        Command::Synth => commands::cmd_synth(&config),
        Command::Slice => commands::cmd_slice(&config),
        Command::Train => commands::cmd_train(&config),
        Command::Eval => commands::cmd_eval(&config),
        Command::Predict { image, texts, out } => {
            commands::cmd_predict(&config, image, texts.as_deref(), out.as_deref())
        }
        Command::Render { image, dets, out } => commands::cmd_render(&config, image, dets, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
