//! The `dforge` command line.
//!
//! Every subcommand resolves one config: the struct's defaults, then the
//! `--config` JSON file, then flags given on the command line. The resolved
//! config is echoed into the run's `manifest.json` before any model state
//! is touched. Component seeds are derived from the global `--seed` with
//! [`crate::rng::derive_seed`].
//!
//! Exit codes: 0 success, 1 run failure (including a sweep with failed
//! cells), 2 usage or config error.

mod args;
mod commands;
mod manifest;

use std::ffi::OsString;

use clap::{CommandFactory, FromArgMatches};

pub use args::{Cli, Command};
pub use commands::{
    AlphaCmd, DistillCmd, EvalCmd, GenDataCmd, HpCmd, PretrainCmd, TrainCmd, DATA_DIR_ENV,
};
pub use manifest::{RunManifest, MANIFEST_FILE};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// How a dispatched command ended.
#[derive(Debug)]
pub enum Outcome {
    Ok,
    /// The run finished but some of its parts failed.
    Partial(String),
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let sub = matches.subcommand().map(|(_, m)| m).expect("a subcommand is required");
    match commands::run(&cli, &matches, sub) {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::Partial(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}
