mod args;
mod commands;
mod error;
mod io;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::{Cli, Command, SynthCommand};
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::input(e.to_string()))?;
    }
    match cli.command {
        Command::Test(a) => commands::test(&a),
        Command::Synth(SynthCommand::PnlNull(a)) => commands::synth_pnl(&a, false),
        Command::Synth(SynthCommand::PnlAlt(a)) => commands::synth_pnl(&a, true),
        Command::Synth(SynthCommand::Dag(a)) => commands::synth_dag(&a),
        Command::Calibrate(a) => commands::suite("calibrate", &a),
        Command::Power(a) => commands::suite("power", &a),
        Command::Perm(a) => commands::suite("perm", &a),
        Command::Bench(a) => commands::bench(&a),
        Command::BenchNull(a) => commands::bench_null(&a),
        Command::Discover(a) => commands::discover(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Numerical(msg) = &e {
                println!("{}", json!({ "error": "numerical failure", "message": msg }));
            }
            ExitCode::from(e.exit_code())
        }
    }
}
