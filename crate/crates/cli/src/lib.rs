//! Batch front-end for longvine: simulation, replicated experiments, fitting,
//! hold-out validation and τ ↔ θ conversion.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "longvine",
    version,
    about = "D-vine models for multivariate longitudinal outcomes"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate training and hold-out panels from the configured model.
    Simulate,
    /// Replicate simulation and fitting and summarise the estimates.
    Experiment,
    /// Fit the configured model to a panel.
    Fit {
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a fitted model against the independence model on a hold-out period.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        holdout: PathBuf,
    },
    /// Convert between a copula parameter and Kendall's τ.
    Tau {
        #[arg(long)]
        family: String,
        #[arg(long, conflicts_with = "tau")]
        theta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Err(CliError::Config(
            "--config is required for this command".into(),
        )),
    }
}

/// Runs one command; messages for the user go to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Tau { family, theta, tau } = &cli.command {
        let line = commands::tau_line(family, *theta, *tau)?;
        println!("family,theta,tau\n{line}");
        return Ok(());
    }
    let cfg = load(cli)?;
    let out = cfg.out_dir(cli.out.as_deref());
    let paths = match &cli.command {
        Command::Simulate => commands::simulate(&cfg, cfg.seed(cli.seed)?, &out)?,
        Command::Experiment => {
            let (summary, paths) = commands::experiment(&cfg, cfg.seed(cli.seed)?, &out)?;
            for p in &paths {
                println!("{}", p.display());
            }
            if summary.too_many_failures() {
                return Err(CliError::Convergence(format!(
                    "{} of {} replications failed",
                    summary.failures.len(),
                    summary.replications
                )));
            }
            return Ok(());
        }
        Command::Fit { data } => commands::fit(&cfg, cli.seed, data, &out)?,
        Command::Validate {
            model,
            train,
            holdout,
        } => commands::validate_cmd(&cfg, cfg.seed(cli.seed)?, model, train, holdout, &out)?.1,
        Command::Tau { .. } => unreachable!("handled above"),
    };
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(())
}
