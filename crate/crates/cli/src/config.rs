//! Command-line arguments and their TOML mirror. Every flag can also be set
//! in the config file: global keys at the top level, subcommand keys under a
//! table named after the subcommand. Flags win over the file.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "skctl",
    version,
    about = "Stochastic control on a random Brownian skeleton"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Global {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// χ_d table replacing the built-in one (also `CHI_FIXTURE_PATH`).
    #[arg(long, global = true)]
    pub chi_fixture: Option<PathBuf>,
    /// Validate, print the derived sizes and exit without simulating.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo estimate of χ_d.
    EstimateChi(ChiArgs),
    /// Simulate skeleton paths to a binary or CSV dump.
    SampleSkeleton(SampleArgs),
    /// Backward dynamic programming on a built-in problem.
    Solve(SolveArgs),
    /// Exchange-option hedging benchmark table.
    Hedge(HedgeArgs),
    /// Empirical convergence rates.
    Rates(RatesArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::EstimateChi(_) => "estimate-chi",
            Command::SampleSkeleton(_) => "sample-skeleton",
            Command::Solve(_) => "solve",
            Command::Hedge(_) => "hedge",
            Command::Rates(_) => "rates",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ChiArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SampleArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// `bin` or `csv`.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SolveArgs {
    /// `tree` (two-step enumeration fixture) or `sde`.
    #[arg(long)]
    pub problem: Option<String>,
    /// Coefficient registry name for `sde`.
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameter `key=value`, repeatable.
    #[arg(long = "param")]
    pub params: Option<Vec<String>>,
    /// `tracking` (−(X_T − target)²) or `terminal` (X_T).
    #[arg(long)]
    pub payoff: Option<String>,
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub a_bar: Option<f64>,
    /// Grid points per action axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub eval_paths: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub ridge: Option<f64>,
    /// One regression per step on (history, action) features.
    #[arg(long)]
    pub joint: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct HedgeArgs {
    /// Dyadic levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<u32>>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[arg(long)]
    pub s1_0: Option<f64>,
    #[arg(long)]
    pub s2_0: Option<f64>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Also run the generic DP with this many grid points per axis.
    #[arg(long)]
    pub generic_grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RatesArgs {
    /// `mesh` (E|T − T_e|) or `euler` (geometric strong error).
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub k_min: Option<u32>,
    #[arg(long)]
    pub k_max: Option<u32>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

pub fn read_file(path: Option<&Path>) -> Result<toml::Table> {
    match path {
        None => Ok(toml::Table::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<toml::Table>()
                .with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// `flags` laid over `file`: every flag that was given replaces the file value.
pub fn overlay<T: Serialize + DeserializeOwned>(
    flags: &T,
    file: Option<&toml::Value>,
    section: &str,
) -> Result<T> {
    let mut merged = match file {
        Some(v) => serde_json::to_value(v)?,
        None => serde_json::Value::Object(Default::default()),
    };
    let Some(table) = merged.as_object_mut() else {
        bail!("config: `{section}` must be a table");
    };
    if let serde_json::Value::Object(given) = serde_json::to_value(flags)? {
        for (key, value) in given {
            if !value.is_null() {
                table.insert(key, value);
            }
        }
    }
    serde_json::from_value(merged).with_context(|| format!("config section `{section}`"))
}

/// The global keys of `file` (subcommand tables removed).
pub fn global_part(file: &toml::Table) -> toml::Value {
    let mut rest = file.clone();
    for name in ["estimate-chi", "sample-skeleton", "solve", "hedge", "rates"] {
        rest.remove(name);
    }
    toml::Value::Table(rest)
}
