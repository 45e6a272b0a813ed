//! Command-line pipeline around the `dpam` library: simulate a cohort, fit
//! it, check convergence, predict severity trajectories and compare fits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpam::model::AnchorMode;

use crate::config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// The fit finished but failed the convergence gate.
    Gate,
    /// Bad arguments, configuration, input files or a failed computation.
    Usage(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Gate => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<dpam::Error> for CliError {
    fn from(e: dpam::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dpam",
    version,
    about = "Latent-time disease progression models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Anchored,
    NonAnchored,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults reproduce the built-in simulated scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for simulation, sampling and prediction.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Sets both anchoring half-widths, in years.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            mode: self.mode.map(|m| match m {
                Mode::Anchored => AnchorMode::Anchored,
                Mode::NonAnchored => AnchorMode::NonAnchored,
            }),
            eps: self.eps,
            out: self.out.clone(),
        }
    }

    fn load(&self) -> Result<RunConfig, CliError> {
        RunConfig::load(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a cohort and write observations, subjects and generating values.
    Simulate(Common),
    /// Fit the model and write draws, diagnostics and a report.
    Fit(Common),
    /// Mean severity trajectories, threshold crossings and RMSE of a fit.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Directory written by `fit`.
        #[arg(long)]
        fit: PathBuf,
    },
    /// Per-marker RMSE of several fits of the same data, side by side.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Fit directories; the first one is the reference for differences.
        #[arg(long = "fit", required = true, num_args = 1)]
        fits: Vec<PathBuf>,
    },
    /// Recompute convergence diagnostics of a fit and apply the gate.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fit: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => commands::cmd_simulate(&c.load()?),
        Command::Fit(c) => commands::cmd_fit(&c.load()?),
        Command::Predict { common, fit } => {
            let fit = commands::load_fit(&fit)?;
            let cfg = with_fit_defaults(&common, &fit)?;
            let out = common.out.clone().unwrap_or_else(|| fit.dir.clone());
            commands::cmd_predict(&fit, &cfg, &out)
        }
        Command::Compare { common, fits } => {
            let cfg = common.load()?;
            let fits = fits
                .iter()
                .map(|f| commands::load_fit(f))
                .collect::<Result<Vec<_>, _>>()?;
            commands::cmd_compare(&fits, &cfg, &cfg.out_dir)
        }
        Command::Diagnose { common, fit } => {
            let fit = commands::load_fit(&fit)?;
            let cfg = with_fit_defaults(&common, &fit)?;
            let out = common.out.clone().unwrap_or_else(|| fit.dir.clone());
            commands::cmd_diagnose(&fit, &cfg, &out)
        }
    }
}

/// The fit's own configuration, with prediction and gate settings taken from
/// `--config` when one is given.
fn with_fit_defaults(common: &Common, fit: &commands::FitDir) -> Result<RunConfig, CliError> {
    let mut cfg = fit.config.clone();
    if common.config.is_some() {
        let given = common.load()?;
        cfg.prediction = given.prediction;
        cfg.gate = given.gate;
    }
    if let Some(seed) = common.seed {
        cfg.prediction.seed = seed;
    }
    Ok(cfg)
}
