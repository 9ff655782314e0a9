//! Operator surface for the encrypted transfer-learning stack.
//!
//! Subcommands mirror the workflow: generate client keys, train the
//! source model, export/serve its frozen prefix, fine-tune a client stack
//! against the (possibly remote) encrypted frozen layers, predict, and
//! benchmark or sweep the synthetic transfer-learning experiment.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 protocol, 5 crypto/depth.

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cryptotl_cli::args::{
    BenchArgs, ExperimentArgs, ExportFrozenArgs, FinetuneArgs, KeygenArgs, PredictArgs, ServeArgs,
    TrainSourceArgs,
};
use cryptotl_cli::commands;

#[derive(Parser)]
#[command(
    name = "cryptotl",
    version,
    about = "Encrypted frozen-layer transfer learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate client key material (secret, public, relinearization,
    /// rotation keys) for a preset.
    Keygen(KeygenArgs),
    /// Train the source-domain server model (optionally with DP-SGD).
    TrainSource(TrainSourceArgs),
    /// Extract the frozen prefix from a trained server model.
    ExportFrozen(ExportFrozenArgs),
    /// Answer encrypted frozen-layer queries (TCP or offline directory).
    Serve(ServeArgs),
    /// Query frozen features for a dataset and fine-tune the client stack.
    Finetune(FinetuneArgs),
    /// Classify inputs: encrypted frozen query plus plain client layers.
    Predict(PredictArgs),
    /// Time the encrypted forward pass and report operation counts.
    Bench(BenchArgs),
    /// Synthetic transfer-learning sweep (all-plaintext fast path).
    Experiment(ExperimentArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Keygen(a) => commands::keygen::run(a),
        Command::TrainSource(a) => commands::train_source::run(a),
        Command::ExportFrozen(a) => commands::export_frozen::run(a),
        Command::Serve(a) => commands::serve::run(a),
        Command::Finetune(a) => commands::finetune::run(a),
        Command::Predict(a) => commands::predict::run(a),
        Command::Bench(a) => commands::bench::run(a),
        Command::Experiment(a) => commands::experiment::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
