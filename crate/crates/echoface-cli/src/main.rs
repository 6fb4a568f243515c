//! Pipeline driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/processing error,
//! 3 real-time budget violation (bench).

mod cmd;
mod manifest;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "echoface", version, about = "Acoustic facial-expression sensing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the transmitted sweep template to a sample file.
    Chirp(cmd::chirp::Args),
    /// Render synthetic sessions: signal, ground truth, manifest.
    Simulate(cmd::simulate::Args),
    /// Run the DSP pipeline over a session and dump profiles and windows.
    Process(cmd::process::Args),
    /// Align sessions on their claps and extract training features.
    Dataset(cmd::dataset::Args),
    /// Train a regressor on extracted features.
    Train(cmd::train::Args),
    /// Predict blendshapes for a feature file with a trained model.
    Predict(cmd::predict::Args),
    /// Score predictions against ground truth.
    Eval(cmd::eval::Args),
    /// Session-level k-fold cross-validation.
    Crossval(cmd::crossval::Args),
    /// Blink-event detection quality against ground truth.
    BlinkEval(cmd::blink_eval::Args),
    /// Replay a session over a loopback socket and process it live.
    Stream(cmd::stream::Args),
    /// Per-stage latency and throughput benchmark with budget gates.
    Bench(cmd::bench::Args),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; anything else is usage.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Chirp(args) => cmd::chirp::run(args),
        Command::Simulate(args) => cmd::simulate::run(args),
        Command::Process(args) => cmd::process::run(args),
        Command::Dataset(args) => cmd::dataset::run(args),
        Command::Train(args) => cmd::train::run(args),
        Command::Predict(args) => cmd::predict::run(args),
        Command::Eval(args) => cmd::eval::run(args),
        Command::Crossval(args) => cmd::crossval::run(args),
        Command::BlinkEval(args) => cmd::blink_eval::run(args),
        Command::Stream(args) => cmd::stream::run(args),
        Command::Bench(args) => cmd::bench::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
