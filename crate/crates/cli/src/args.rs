use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cev_core::default_beta;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cevsim",
    version,
    about = "Absorption times of the CEV diffusion by Euler-Maruyama Monte Carlo"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate P(tau <= t) at one step size.
    Estimate(RunArgs),
    /// Estimate the mean exit time from (delta^beta, 1).
    ExitTime(RunArgs),
    /// Relative error versus step size for p = 1/2, as CSV and SVG.
    Fig1(RunArgs),
    /// Absorption estimates over a list of step sizes, any p.
    Sweep(RunArgs),
    /// Print closed-form and quadrature values at a point.
    Analytic(AnalyticArgs),
    /// Run the fast invariant checks.
    Selftest,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub x0: Option<f64>,
    /// Horizon; for exit-time, the censoring time.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Comma-separated step sizes for fig1 and sweep.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of trajectories.
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores); never changes the results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// CSV output path; a `.manifest.json` is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG output path (fig1).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Stop at 0 instead of delta^beta (experimental).
    #[arg(long)]
    pub threshold_zero: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyticArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// State at which to evaluate.
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Print only phi(x) (with --psi, both).
    #[arg(long)]
    pub phi: bool,
    /// Print only psi(x) (with --phi, both).
    #[arg(long)]
    pub psi: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_zero: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Default half-decade grid from 1e-1 down to 1e-3.
pub fn default_deltas() -> Vec<f64> {
    [-1.0, -1.5, -2.0, -2.5, -3.0].iter().map(|e| 10f64.powf(*e)).collect()
}

/// Fully resolved inputs of a simulation command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub mu: f64,
    pub sigma: f64,
    pub p: f64,
    pub x0: f64,
    pub t: f64,
    pub delta: f64,
    pub deltas: Vec<f64>,
    pub beta: f64,
    pub m: u64,
    pub seed: u64,
    pub workers: usize,
    pub threshold_zero: bool,
}

/// Per-command fallbacks for `x0`, `t` and `delta`.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub x0: f64,
    pub t: f64,
    pub delta: f64,
}

impl Defaults {
    pub const ABSORPTION: Defaults = Defaults {
        x0: 1.0,
        t: 5.0,
        delta: 1e-3,
    };
    pub const EXIT_TIME: Defaults = Defaults {
        x0: 0.5,
        t: 50.0,
        delta: 1e-4,
    };
}

impl RunArgs {
    /// Flags over config file over defaults.
    pub fn resolve(&self, defaults: Defaults) -> Result<(Settings, Option<ConfigFile>), CliError> {
        let cfg = self.config.as_deref().map(ConfigFile::load).transpose()?;
        let c = cfg.clone().unwrap_or_default();
        let p = self.p.or(c.p).unwrap_or(0.5);
        let settings = Settings {
            mu: self.mu.or(c.mu).unwrap_or(0.0),
            sigma: self.sigma.or(c.sigma).unwrap_or(1.0),
            p,
            x0: self.x0.or(c.x0).unwrap_or(defaults.x0),
            t: self.t.or(c.t).unwrap_or(defaults.t),
            delta: self.delta.or(c.delta).unwrap_or(defaults.delta),
            deltas: self.deltas.clone().or(c.deltas).unwrap_or_else(default_deltas),
            beta: self.beta.or(c.beta).unwrap_or_else(|| default_beta(p)),
            m: self.m.or(c.m).unwrap_or(100_000),
            seed: self.seed.or(c.seed).unwrap_or(42),
            workers: self.workers.or(c.workers).unwrap_or(0),
            threshold_zero: self.threshold_zero || c.threshold_zero.unwrap_or(false),
        };
        Ok((settings, cfg))
    }
}

/// Resolved inputs of `analytic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSettings {
    pub mu: f64,
    pub sigma: f64,
    pub p: f64,
    pub x: f64,
    pub t: f64,
}

impl AnalyticArgs {
    pub fn resolve(&self) -> Result<AnalyticSettings, CliError> {
        let c = self
            .config
            .as_deref()
            .map(ConfigFile::load)
            .transpose()?
            .unwrap_or_default();
        Ok(AnalyticSettings {
            mu: self.mu.or(c.mu).unwrap_or(0.0),
            sigma: self.sigma.or(c.sigma).unwrap_or(1.0),
            p: self.p.or(c.p).unwrap_or(0.5),
            x: self.x.or(c.x).or(c.x0).unwrap_or(1.0),
            t: self.t.or(c.t).unwrap_or(5.0),
        })
    }
}
