//! `tree-oram`: run workloads on the ORAM and reproduce its experiments.
//!
//! Exit status: 0 success, 2 an acceptance predicate or result check
//! failed, 3 the ORAM aborted, 4 usage or configuration error, 1 anything
//! else.

mod args;
mod experiment;
mod output;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{expand_config, Cli, Command};

/// How a successful invocation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
    Aborted,
}

const EXIT_FAILED: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_USAGE: u8 = 4;

fn error_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<tree_oram::Error>() {
        Some(err) if err.abort_event().is_some() => EXIT_ABORT,
        Some(
            tree_oram::Error::InvalidConfig(_)
            | tree_oram::Error::InsufficientSamples { .. }
            | tree_oram::Error::UnequalLengths(..)
            | tree_oram::Error::AddressOutOfRange { .. },
        ) => EXIT_USAGE,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run::run(a),
        Command::Experiment(a) => experiment::run(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(EXIT_FAILED),
        Ok(Status::Aborted) => ExitCode::from(EXIT_ABORT),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}
