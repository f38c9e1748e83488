//! `decontext` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration or path error, 3 nothing to
//! evaluate, 4 fatal backend error, 130 interrupted.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn empty(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Stats(a) => commands::stats(a),
        Command::Cache { action } => commands::cache(action),
        Command::ExportAnnotations(a) => commands::export_annotations(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("decontext: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
