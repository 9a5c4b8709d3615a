//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::schema::{AlphaUUnits, ModelName};

#[derive(Debug, Parser, Serialize)]
#[command(name = "trf", version, about = "Threshold space-time t random fields for precipitation occurrence")]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores). Results do not
    /// depend on this.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Convert tipping-bucket records into an occurrence matrix.
    Ingest(IngestArgs),
    /// Fit the seasonal logistic cutoff model.
    Cutoff(CutoffArgs),
    /// Simulate thresholded tRF/GRF occurrence series.
    Simulate(SimulateArgs),
    /// Conditional probability tables, simultaneous-rain pmf and spells.
    Stats(StatsArgs),
    /// Simulation-based parameter fit.
    Fit(FitArgs),
    /// Match a Gaussian field's range to the joint-occurrence targets of a
    /// spatial t field.
    MatchRange(MatchRangeArgs),
    /// Functional boxplot summary of a curve ensemble.
    Fbplot(FbplotArgs),
    /// Run the whole pipeline from a TOML config.
    Run(RunArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// CSV with columns `site_id,timestamp`.
    #[arg(long)]
    pub tips: PathBuf,
    /// CSV with columns `site_id,lat,lon` (or `site_id,x,y`).
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub step_minutes: u32,
    /// Start of the span, inclusive (ISO-8601).
    #[arg(long)]
    pub from: String,
    /// End of the span, exclusive (ISO-8601).
    #[arg(long)]
    pub to: String,
    /// OR-aggregate this many steps into one after ingestion.
    #[arg(long, default_value_t = 1)]
    pub aggregate: usize,
    /// Occurrence output; `.csv` for text, anything else for the bitset format.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CutoffArgs {
    /// Occurrence matrix (CSV or bitset).
    #[arg(long)]
    pub occ: PathBuf,
    /// Largest harmonic order compared by AIC.
    #[arg(long = "H-max", alias = "h-max", default_value_t = 3)]
    pub h_max: usize,
    /// Degrees of freedom recorded with the model and used for `--surface`.
    #[arg(long, default_value = "inf")]
    pub nu: String,
    /// Restrict to `FROM..TO` (ISO-8601, end exclusive) before fitting.
    #[arg(long)]
    pub window: Option<String>,
    /// Model JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the cutoff surface `c(x, t)` over the fitted steps as CSV.
    #[arg(long)]
    pub surface: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Network CSV.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    pub network: Option<PathBuf>,
    /// Use a planar `W x H` lattice on the unit square instead of a network file.
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    pub grid: Option<Vec<usize>>,
    /// Covariance template (TOML).
    #[arg(long)]
    pub cov_spec: Option<PathBuf>,
    /// Take `α, β, α_u, ν` from a fit result.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Spatial range as a fraction of `d_max`; overrides the template.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Temporal long-memory exponent; overrides the template.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub alpha_u: Option<f64>,
    #[arg(long, value_enum, default_value_t = AlphaUUnits::Fraction)]
    pub alpha_u_units: AlphaUUnits,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 60)]
    pub step_minutes: u32,
    /// Time of the first step (ISO-8601).
    #[arg(long, default_value = "2000-01-01T00:00:00Z")]
    pub origin: String,
    /// Marginal quantile level used as the cutoff (the dry probability).
    #[arg(long, conflicts_with = "cutoff_model")]
    pub cutoff_p: Option<f64>,
    /// Seasonal cutoff model JSON.
    #[arg(long)]
    pub cutoff_model: Option<PathBuf>,
    /// Output path; with `--reps > 1` replication `k` goes to `<stem>.r<k>.<ext>`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub occ: PathBuf,
    #[arg(long)]
    pub network: PathBuf,
    /// OR-aggregate this many steps first.
    #[arg(long, default_value_t = 1)]
    pub aggregate: usize,
    /// Also write per-`j` plot series.
    #[arg(long)]
    pub plot_data: bool,
    /// Output directory for the CSV tables.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Observed occurrence matrix.
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, conflicts_with = "cutoff_p", required_unless_present = "cutoff_p")]
    pub cutoff_model: Option<PathBuf>,
    /// Marginal quantile level used as the cutoff (the dry probability).
    #[arg(long)]
    pub cutoff_p: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModelName::Trf)]
    pub model: ModelName,
    /// Degrees of freedom to try: `2..10` or `3,5,7`.
    #[arg(long, default_value = "2..10")]
    pub nu_grid: String,
    /// Replications per criterion evaluation.
    #[arg(long = "M", alias = "m", default_value_t = 50)]
    pub m: usize,
    /// `alpha=LO:HI,beta=LO:HI,alpha_u=LO:HI`; omitted parameters keep their defaults.
    #[arg(long)]
    pub bounds: Option<String>,
    /// Starting point `α,β,α_u`; the centre of the bounds by default.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub cov_spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AlphaUUnits::Fraction)]
    pub alpha_u_units: AlphaUUnits,
    /// Nelder–Mead evaluation budget per `ν`.
    #[arg(long, default_value_t = 500)]
    pub max_evals: usize,
    /// Fit result JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MatchRangeArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Degrees of freedom of the target t field.
    #[arg(long, default_value = "3")]
    pub nu: String,
    /// Range of the target t field, fraction of `d_max`.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub smoothness: f64,
    /// Marginal dry probability.
    #[arg(long, default_value_t = 0.975)]
    pub p_dry: f64,
    /// Replications used to estimate the targets.
    #[arg(long, default_value_t = 100_000)]
    pub target_reps: usize,
    /// Replications per candidate range.
    #[arg(long, default_value_t = 200_000)]
    pub mc_budget: usize,
    /// Search interval `LO:HI` for the Gaussian range.
    #[arg(long, default_value = "0.05:5")]
    pub bounds: String,
    #[arg(long, default_value_t = 25)]
    pub grid_points: usize,
    /// Replications for the comparison curves of both fields (0 skips them).
    #[arg(long, default_value_t = 10_000)]
    pub check_reps: usize,
    /// Result JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FbplotArgs {
    /// Curves CSV: header `curve,<j>...`, one curve per row.
    #[arg(long)]
    pub curves: PathBuf,
    /// Overlay curve in the same layout; the first row is used.
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// Summary CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// Pipeline config (TOML).
    pub config: PathBuf,
    /// Validate the config and print the stage plan without running it.
    #[arg(long)]
    pub dry_run: bool,
    /// Override a config key, e.g. `--set fit.replications=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}
