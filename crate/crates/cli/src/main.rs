//! `practsig`: simulate, fit, summarize, compare, predict and evaluate
//! decision scenarios from the command line.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numeric failure
//! while sampling, 4 convergence diagnostics failed.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use practsig_core::Error;

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numeric(String),
    Diagnostic(String),
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Diagnostic(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numeric(m) | Failure::Diagnostic(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Initialization { .. } | Error::NonFiniteTarget { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "practsig", version, about = "Bayesian fault-detection models and prospect-theory decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset from known parameters.
    Simulate(commands::SimulateArgs),
    /// Fit M1 or M2 by MCMC and write the draws with a metadata sidecar.
    Fit(commands::FitArgs),
    /// Posterior summary table and marginal histograms.
    Summarize(commands::SummarizeArgs),
    /// Rank fitted models by PSIS-LOO, with WAIC alongside.
    Compare(commands::CompareArgs),
    /// Posterior-predictive fault counts for predictor settings.
    Predict(commands::PredictArgs),
    /// Prospect-theory utilities of a decision scenario, optionally swept over a cost.
    Utility(commands::UtilityArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Summarize(a) => commands::summarize(a),
        Command::Compare(a) => commands::compare(a),
        Command::Predict(a) => commands::predict(a),
        Command::Utility(a) => commands::utility(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        assert_eq!(Failure::from(Error::Initialization { attempts: 100 }).code(), 3);
        assert_eq!(Failure::from(Error::NonFiniteTarget { value: f64::NAN, point: vec![0.0] }).code(), 3);
        assert_eq!(Failure::from(Error::InvalidInput("row 3: faults must be non-negative".into())).code(), 2);
        assert_eq!(Failure::from(Error::Config("thin must be positive".into())).code(), 2);
        assert_eq!(Failure::Diagnostic("alpha".into()).code(), 4);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "missing");
        assert_eq!(Failure::from(io).code(), 2);
    }
}
