use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use didsens::sim::DEFAULT_SEED;
use serde::Serialize;

/// Difference-in-differences with selection-based sensitivity analysis.
#[derive(Debug, Parser, Serialize)]
#[command(name = "didsens", version, about)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory receiving result files and a run manifest.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Two-group DiD, regression-adjusted when a design is given.
    Estimate(EstimateArgs),
    /// ATT as a function of the persistence parameter, and identified sets.
    Sensitivity(SensitivityArgs),
    /// Persistence of the centered outcome between two periods.
    Rho(RhoArgs),
    /// Group-time ATTs and pre-trend gaps for staggered adoption.
    Attgt(AttgtArgs),
    /// Draw a panel from a configuration or a registered scenario.
    Simulate(SimulateArgs),
    /// Run the scenario bank and compare gaps with predicted verdicts.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Long-format panel CSV.
    pub data: PathBuf,
    #[arg(long, default_value = "id")]
    pub id_col: String,
    #[arg(long, default_value = "period")]
    pub period_col: String,
    #[arg(long, default_value = "y")]
    pub y_col: String,
    #[arg(long, default_value = "group")]
    pub group_col: String,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub pre: i64,
    #[arg(long, allow_hyphen_values = true)]
    pub post: i64,
    /// Comma-separated terms such as "1,age,age^2", or "default".
    #[arg(long)]
    pub design: Option<String>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("rho").required(true).multiple(true).args(["rho_grid", "rho_bounds"])))]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub pre: i64,
    #[arg(long, allow_hyphen_values = true)]
    pub post: i64,
    #[arg(long)]
    pub design: Option<String>,
    /// `lo:hi:step`
    #[arg(long, allow_hyphen_values = true)]
    pub rho_grid: Option<String>,
    /// `lo,hi`
    #[arg(long, allow_hyphen_values = true)]
    pub rho_bounds: Option<String>,
    /// `from,to,k`: persistence between two pre-periods raised to the k-th power.
    #[arg(long)]
    pub rho_benchmark: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct RhoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub from: i64,
    #[arg(long, allow_hyphen_values = true)]
    pub to: i64,
    #[arg(long, default_value_t = 1)]
    pub horizon: u32,
    #[arg(long)]
    pub design: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct AttgtArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "scenario"])))]
pub struct SimulateArgs {
    /// TOML simulation config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Registered scenario whose configuration is used.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Override the number of units.
    #[arg(long)]
    pub n: Option<usize>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
}
