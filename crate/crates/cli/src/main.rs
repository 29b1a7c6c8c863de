//! `symseq`: generate → train → eval → plot.
//!
//! Exit status is 0 on success, 2 for usage errors and 1 for any other
//! failure.

mod args;
mod commands;
mod config;
mod manifest;
mod plot;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use commands::UsageError;
use config::ConfigFile;

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate(a) => commands::generate(a, &cfg.generate),
        Command::Train(a) => commands::train(a, &cfg.train),
        Command::Eval(a) => commands::eval(a, &cfg.eval),
        Command::Plot(a) => commands::plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<UsageError>() {
                Cli::command().error(ErrorKind::ValueValidation, u).exit();
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
