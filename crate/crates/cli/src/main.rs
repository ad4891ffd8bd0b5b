mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use crate::args::Cli;

/// Failure classes mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Verification ran but some instance breached a tolerance.
    Verification,
    /// Bad flags, unreadable inputs or failed writes.
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<odrpo::OdrpoError> for CliError {
    fn from(e: odrpo::OdrpoError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            // Value errors come without a usage line; add the subcommand's.
            if !e.to_string().contains("Usage:") {
                let mut cmd = Cli::command();
                cmd.build();
                let sub = argv
                    .iter()
                    .skip(1)
                    .find_map(|a| cmd.find_subcommand_mut(a).cloned());
                let usage = match sub {
                    Some(mut sub) => sub.render_usage(),
                    None => cmd.render_usage(),
                };
                eprintln!("\n{usage}");
            }
            return ExitCode::from(2);
        }
        // --help and --version
        Err(e) => e.exit(),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let CliError::Usage(msg) = &e {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
