//! `rwresnet` command-line entry point.

mod args;
mod commands;
mod error;

use std::process::ExitCode;

use args::{Command, Parsed};
use error::CliError;

fn run(argv: Vec<std::ffi::OsString>) -> Result<(), CliError> {
    let (cli, effective) = match args::parse(argv)? {
        Parsed::Info(text) => {
            print!("{text}");
            return Ok(());
        }
        Parsed::Run { cli, effective } => (cli, effective),
    };
    for (k, v) in effective.iter() {
        log::info!("config {k}={v}");
    }
    match &cli.command {
        Command::Train(a) => commands::train(a, &effective),
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::SynthData(a) => commands::synth_data(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.code as u8)
        }
    }
}
