//! `paramid`: command-line front end for staged parameter identification.
//!
//! Every command reads and writes plain files, so the expensive `simulate`
//! step can be resumed or shared without retraining. Commands that draw
//! random numbers require an explicit `--seed`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 compute
//! error. On failure a JSON error report is written to `--error-file`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paramid::ErrorClass;
use serde::Serialize;

mod commands;

#[derive(Parser)]
#[command(name = "paramid", version, about = "Inverse identification of model parameters from response curves")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Worker threads for simulations and training evaluations [default: 7,
    /// or the plan's `workers`].
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Where to write the machine-readable error report on failure.
    #[arg(long, global = true, default_value = "paramid-error.json")]
    error_file: PathBuf,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Latin Hypercube design over a parameter space, optionally decorrelated.
    Sample(commands::SampleArgs),
    /// Simulate every design row with a forward model.
    Simulate(commands::SimulateArgs),
    /// Pearson sensitivity traces and peak table of a bundle.
    Sensitivity(commands::SensitivityArgs),
    /// Train and validate one stage network on a bundle.
    Train(commands::TrainArgs),
    /// Apply trained stages to measured curves.
    Identify(commands::IdentifyArgs),
    /// Run a whole plan: screening, stages, identification and manifest.
    Run(commands::RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Simulate(_) => "simulate",
            Command::Sensitivity(_) => "sensitivity",
            Command::Train(_) => "train",
            Command::Identify(_) => "identify",
            Command::Run(_) => "run",
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    command: &'a str,
    class: ErrorClass,
    exit_code: u8,
    message: String,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Compute => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let name = cli.command.name();
    let result = match cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Simulate(a) => commands::simulate(a, &cli.global),
        Command::Sensitivity(a) => commands::sensitivity(a),
        Command::Train(a) => commands::train(a, &cli.global),
        Command::Identify(a) => commands::identify(a, &cli.global),
        Command::Run(a) => commands::run(a, &cli.global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(name, &e, &cli.global),
    }
}

fn fail(command: &str, e: &commands::Failure, global: &Global) -> ExitCode {
    let class = e.class;
    let code = exit_code(class);
    let message = e.message.replace('\n', " ");
    eprintln!("paramid {command}: {} error: {message}", class.as_str());
    let report = ErrorReport { command, class, exit_code: code, message };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Err(io) = std::fs::write(&global.error_file, text) {
        eprintln!("paramid: cannot write {}: {io}", global.error_file.display());
    }
    ExitCode::from(code)
}
