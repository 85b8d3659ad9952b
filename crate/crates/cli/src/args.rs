//! Flags and the equivalent JSON run documents.
//!
//! Every command struct doubles as a serde type so that `curtail run --config`
//! accepts the same parameters as the flags. Flattened clap groups appear as
//! nested objects in JSON (`"design": {...}`).

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "curtail", version, about = "Curtailed binomial tests for rare side effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximal sample size, critical count and attained error probabilities
    Design(DesignCmd),
    /// Operating characteristics over a θ grid, as CSV
    Oc(OcCmd),
    /// Sequential monitoring of a running trial
    #[command(subcommand)]
    Monitor(MonitorCmd),
    /// Point estimate and interval for a finished trial
    Estimate(EstimateCmd),
    /// Monte Carlo replications against the exact characteristics
    Simulate(SimulateCmd),
    /// Recompute the reference tables and example, cell by cell
    Repro(ReproCmd),
    /// Execute one command described by a JSON document
    Run(RunCmd),
}

#[derive(Debug, Subcommand)]
pub enum MonitorCmd {
    /// Write a fresh snapshot for a design
    Init(InitCmd),
    /// Apply an event log to a snapshot and print the decision
    Observe(ObserveCmd),
    /// Print the state held in a snapshot
    Status(StatusCmd),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Table,
    Json,
}

/// Design parameters. Exactly one of `theta1` and `delta` is required.
///
/// `n_star` and/or `k_star` pin the counts instead of solving for them: with
/// one given, the other follows from the critical-value rule.
#[derive(Debug, Clone, Args, Deserialize)]
#[command(group(ArgGroup::new("alternative").required(true).args(["theta1", "delta"])))]
#[serde(deny_unknown_fields)]
pub struct DesignArgs {
    /// Nominal type I error
    #[arg(long)]
    pub alpha: f64,
    /// Nominal type II error
    #[arg(long)]
    pub beta: f64,
    /// Side-effect rate under the null hypothesis
    #[arg(long)]
    pub theta0: f64,
    /// Side-effect rate under the alternative
    #[arg(long, conflicts_with = "delta")]
    pub theta1: Option<f64>,
    /// Relative separation, theta1 = theta0 * (1 + delta)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Search with exact binomial tails instead of the normal approximation
    #[arg(long, conflicts_with_all = ["n_star", "k_star"])]
    #[serde(default)]
    pub exact: bool,
    /// Fix the maximal sample size
    #[arg(long)]
    pub n_star: Option<u64>,
    /// Fix the critical count
    #[arg(long)]
    pub k_star: Option<u64>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignCmd {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcCmd {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Explicit θ values, comma separated
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to", "steps"])]
    #[serde(default)]
    pub thetas: Vec<f64>,
    /// Grid start (clipped into the open unit interval)
    #[arg(long, default_value_t = 0.0)]
    #[serde(default)]
    pub from: f64,
    /// Grid end (clipped into the open unit interval)
    #[arg(long, default_value_t = 1.0)]
    #[serde(default = "one")]
    pub to: f64,
    /// Number of grid intervals
    #[arg(long, default_value_t = 100)]
    #[serde(default = "hundred")]
    pub steps: usize,
    /// Add estimator mean, second moment and variance columns
    #[arg(long)]
    #[serde(default)]
    pub moments: bool,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitCmd {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Overwrite an existing snapshot
    #[arg(long)]
    #[serde(default)]
    pub force: bool,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveCmd {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// JSONL event log, `-` for stdin
    #[arg(long)]
    pub events: PathBuf,
    /// Ignore events already applied to the snapshot (whole-log re-feeds)
    #[arg(long)]
    #[serde(default)]
    pub skip_seen: bool,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusCmd {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateCmd {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// One minus the interval level
    #[arg(long, default_value_t = 0.05)]
    #[serde(default = "gamma")]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub design: DesignArgs,
    /// True side-effect rate
    #[arg(long)]
    pub theta: f64,
    #[arg(long, default_value_t = 10_000)]
    #[serde(default = "reps")]
    pub reps: u64,
    #[arg(long, default_value_t = 42)]
    #[serde(default = "seed")]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    #[serde(default = "gamma")]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Table1,
    Table2,
    Table3,
    Table4,
    Fig2,
    Fig3,
    CovidExample,
    All,
}

#[derive(Debug, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproCmd {
    #[arg(long, value_enum, default_value = "all")]
    #[serde(default = "all")]
    pub target: Target,
    /// Seed for the coverage simulation
    #[arg(long, default_value_t = 42)]
    #[serde(default = "seed")]
    pub seed: u64,
    /// Replications per coverage cell
    #[arg(long, default_value_t = 10_000)]
    #[serde(default = "reps")]
    pub reps: u64,
    /// Directory for the figure curve CSVs
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct RunCmd {
    /// JSON document with a "command" key and that command's parameters
    #[arg(long)]
    pub config: PathBuf,
}

/// A command as a JSON document, e.g.
/// `{"command": "design", "design": {"alpha": 0.05, ...}, "format": "json"}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Design(DesignCmd),
    Oc(OcCmd),
    MonitorInit(InitCmd),
    MonitorObserve(ObserveCmd),
    MonitorStatus(StatusCmd),
    Estimate(EstimateCmd),
    Simulate(SimulateCmd),
    Repro(ReproCmd),
}

fn one() -> f64 {
    1.0
}

fn hundred() -> usize {
    100
}

fn gamma() -> f64 {
    0.05
}

fn reps() -> u64 {
    10_000
}

fn seed() -> u64 {
    42
}

fn all() -> Target {
    Target::All
}
