//! Library half of the `fedkbp` command: argument handling, run execution
//! and run comparison. The binary is a thin wrapper so tests can drive the
//! same code paths in-process.

pub mod args;
pub mod compare;
pub mod run;

use std::path::PathBuf;

use fedkbp_core::dataset::{desk_phantoms, export_native};

pub use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fedkbp_core::Error),
    #[error("I/O error on {0}: {1}")]
    Io(PathBuf, std::io::Error),
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;
pub const EXIT_INTERNAL: u8 = 1;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use fedkbp_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Config(_)) => EXIT_USAGE,
            CliError::Io(..) | CliError::Core(E::Data { .. } | E::Io { .. } | E::Evaluation(_)) => EXIT_DATA,
            CliError::Core(E::Protocol(_)) => EXIT_PROTOCOL,
            CliError::Core(_) => EXIT_INTERNAL,
        }
    }
}

/// Executes a parsed command, printing results to standard output.
pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => {
            let settings = run::resolve(a)?;
            let outcome = run::execute(&settings)?;
            println!("{}", run::summary(&outcome.report));
            println!("wrote {} to {}", outcome.outputs.join(", "), settings.out.display());
        }
        Command::Compare(a) => {
            let c = compare::compare_runs(&a.runs)?;
            print!("{}", compare::render(&c));
        }
        Command::Phantoms(a) => {
            let cases = desk_phantoms(a.seed, a.distribution, a.dims)?;
            export_native(&cases, &a.out)?;
            println!("wrote {} cases to {}", cases.len(), a.out.display());
        }
    }
    Ok(())
}
