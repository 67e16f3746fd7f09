use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod failure;

use failure::Failure;

/// Multi-accurate CATE estimation, simulation and experiment grids.
#[derive(Debug, Parser)]
#[command(name = "mcate", version, about)]
struct Cli {
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a dataset from one of the simulation designs.
    Simulate(commands::simulate::Args),
    /// Fit a CATE learner on CSV data and save it as JSON.
    Fit(commands::fit::Args),
    /// Write per-row effect predictions of a saved model.
    Predict(commands::predict::Args),
    /// Report the multi-accuracy error of a saved model on CSV data.
    Audit(commands::audit::Args),
    /// Run an experiment grid from a config file.
    Grid(commands::grid::Args),
    /// Aggregate grid records into summary and table CSVs.
    Report(commands::report::Args),
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Fit(a) => commands::fit::run(a),
        Command::Predict(a) => commands::predict::run(a),
        Command::Audit(a) => commands::audit::run(a),
        Command::Grid(a) => commands::grid::run(a),
        Command::Report(a) => commands::report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
