//! Command-line driver: simulate data, fit the column chains, evaluate and
//! diagnose the estimates, and plot the interval bars.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod svg;

use clap::Parser;

/// Quasi-Bayesian neighborhood selection for Gaussian graphical models.
#[derive(Debug, Parser)]
#[command(name = "qbgraph", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: pipeline::Command,
    #[command(flatten)]
    pub overrides: config::Overrides,
}
