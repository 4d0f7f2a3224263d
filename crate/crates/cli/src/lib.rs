//! Command-line front end of the `bnmf` library.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod krange;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use config::FileConfig;
use error::CliError;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let run = || match &cli.command {
        Command::Fit(a) => commands::fit_cmd(a, &file, cli.quiet),
        Command::Predict(a) => commands::predict_cmd(a, &file, cli.quiet),
        Command::Experiment(a) => commands::experiment_cmd(a, &file, cli.quiet),
        Command::Generate(a) => commands::generate_cmd(a, &file, cli.quiet),
    };
    match cli.threads.or(file.threads) {
        Some(0) => Err(CliError::user("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(run),
        None => run(),
    }
}
