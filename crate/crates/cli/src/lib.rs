//! `impulse` command-line driver: solve, simulate and verify from a TOML config.

// `!(a < b)` guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub const TOOL_VERSION: &str = concat!("impulse ", env!("CARGO_PKG_VERSION"));

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Convergence(String),
    Certification(String),
    Io(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Certification(_) => 4,
            CliError::Io(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Convergence(m) => write!(f, "solver failed: {m}"),
            CliError::Certification(m) => write!(f, "not certified: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<impulse_core::Error> for CliError {
    fn from(e: impulse_core::Error) -> Self {
        fn class(e: &impulse_core::Error) -> fn(String) -> CliError {
            use impulse_core::Error as E;
            match e {
                E::Domain(_) => CliError::Validation,
                E::Convergence { .. } | E::Numerical(_) | E::NonFinite { .. } | E::Simulation { .. } => {
                    CliError::Convergence
                }
                E::Sweep { source, .. } => class(source),
                E::Io(_) | E::Format(_) => CliError::Io,
            }
        }
        class(&e)(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "impulse", version, about = "Risk-sensitive dyadic impulse control solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyTarget {
    Drift,
    Minorisation,
    Holder,
    Contraction,
    Sweep,
    NoiseBound,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or load the kernel and solve the Bellman equation.
    Solve(CommonArgs),
    /// Estimate the long-run rate of a solved policy by simulation.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Policy artifact (default: OUT/policy.json).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Run one empirical check.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        which: VerifyTarget,
    },
}

/// Parse `args` and run; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
