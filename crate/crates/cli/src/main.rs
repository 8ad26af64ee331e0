mod cli;
mod commands;
mod emit;
mod error;
mod manifest;
mod model;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SDA_LOG", "warn")).init();
    let cli = cli::Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sda: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
