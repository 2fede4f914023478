//! `fair`: train, score, evaluate, and analyze image-restoration anomaly
//! detection models.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 data error,
//! 4 metric undefined for the given inputs, 1 anything else.

mod commands;
mod config;
mod dataset;
mod manifest;
mod plot;

use clap::Parser;

use fair_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "fair",
    version,
    about = "Self-supervised image-restoration anomaly detection from high-frequency components"
)]
enum Cli {
    /// Train a restoration model on normal images.
    Train(commands::train::TrainArgs),
    /// Score images with a trained checkpoint.
    Infer(commands::infer::InferArgs),
    /// Evaluate a checkpoint on a labeled test split.
    Eval(commands::eval::EvalArgs),
    /// Frequency-domain diagnostics (transfer, impulse, ringing, energy,
    /// freq-bias).
    Analyze(commands::analyze::AnalyzeArgs),
    /// Reorganize the VisA dataset into the MVTec-style layout.
    IngestVisa(commands::ingest::IngestArgs),
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::Image(_) | Error::Checkpoint(_) => 3,
        Error::UndefinedMetric(_) => 4,
        _ => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli {
        Cli::Train(args) => commands::train::run(args),
        Cli::Infer(args) => commands::infer::run(args),
        Cli::Eval(args) => commands::eval::run(args),
        Cli::Analyze(args) => commands::analyze::run(args),
        Cli::IngestVisa(args) => commands::ingest::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code_for(&err));
        }
    }
}
