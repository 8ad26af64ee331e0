use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sda_core::calibration::Rule;
use sda_core::{Hypothesis, DEFAULT_TAIL_TOL};

#[derive(Debug, Parser)]
#[command(
    name = "sda",
    version,
    about = "Accuracy and decision time of q-out-of-N groups of sequential decision makers"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Output format; each command picks a default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write data here (plus sidecar and run manifest) instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for Monte Carlo runs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Undecided mass at which horizons stop growing.
    #[arg(long, global = true, default_value_t = DEFAULT_TAIL_TOL)]
    pub tail_tol: f64,
    /// Fixed profile horizon instead of automatic growth.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decision profile of a single SPRT decision maker.
    Profile(ProfileArgs),
    /// Group decision probabilities for one (N, q).
    Aggregate(AggregateArgs),
    /// Group metrics over a grid of group sizes, one row per (N, q).
    Sweep(SweepArgs),
    /// Large-N limits and monotonicity checks.
    Asymptotics(AsymptoticsArgs),
    /// Monte Carlo run of the full protocol.
    Simulate(SimulateArgs),
    /// Symmetric SPRT threshold that gives a target group error.
    Calibrate(CalibrateArgs),
    /// Fastest vs majority rule at equal group accuracy.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    Gaussian,
    Binomial,
}

/// Observation model and Wald design of one SDM.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Dist::Gaussian)]
    pub dist: Dist,
    /// Parameter under H0 (gaussian default 0).
    #[arg(long, allow_negative_numbers = true)]
    pub theta0: Option<f64>,
    /// Parameter under H1 (gaussian default 1).
    #[arg(long, allow_negative_numbers = true)]
    pub theta1: Option<f64>,
    /// Gaussian standard deviation (required for gaussian).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Binomial half gap: θ0 = 0.5 − ε, θ1 = 0.5 + ε.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Design misdetection probability (default 0.1).
    #[arg(long)]
    pub pmd: Option<f64>,
    /// Design false-alarm probability (default 0.1).
    #[arg(long)]
    pub pfa: Option<f64>,
    /// Chain step for gaussian models.
    #[arg(long)]
    pub delta: Option<f64>,
}

/// Either a profile file or a model to generate one from.
#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Profile CSV (sidecar picked up from the same stem).
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Binomial trials per observation.
    #[arg(long, default_value_t = 5)]
    pub trials: u32,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Binomial trials per observation.
    #[arg(long = "n", default_value_t = 5)]
    pub trials: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TruthArg {
    #[value(name = "0")]
    H0,
    #[value(name = "1")]
    H1,
}

impl From<TruthArg> for Hypothesis {
    fn from(t: TruthArg) -> Self {
        match t {
            TruthArg::H0 => Hypothesis::H0,
            TruthArg::H1 => Hypothesis::H1,
        }
    }
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Group size.
    #[arg(long)]
    pub n: usize,
    /// Vote threshold (default: majority).
    #[arg(long)]
    pub q: Option<usize>,
    /// True hypothesis.
    #[arg(long, value_enum, default_value_t = TruthArg::H1)]
    pub hypothesis: TruthArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepRule {
    Fastest,
    Majority,
    AllQ,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Group sizes as lo:step:hi, lo:hi, or a comma list.
    #[arg(long, value_parser = parse_grid, default_value = "1:2:61")]
    pub n_grid: Grid,
    #[arg(long, value_enum, default_value_t = SweepRule::AllQ)]
    pub rule: SweepRule,
    #[arg(long, value_enum, default_value_t = TruthArg::H1)]
    pub hypothesis: TruthArg,
}

#[derive(Debug, Args)]
pub struct AsymptoticsArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum, default_value_t = TruthArg::H1)]
    pub hypothesis: TruthArg,
    /// Group sizes for the monotonicity checks.
    #[arg(long, value_parser = parse_grid, default_value = "1:2:35")]
    pub n_grid: Grid,
    /// Single-SDM error for the majority closed form over the grid.
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub n: usize,
    /// Vote threshold (default: majority).
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub replicates: u64,
    #[arg(long, value_enum, default_value_t = TruthArg::H1)]
    pub hypothesis: TruthArg,
}

/// Template model whose thresholds are replaced during calibration.
#[derive(Debug, Clone, Args)]
pub struct TemplateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub trials: u32,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub template: TemplateArgs,
    /// Target group p_w.
    #[arg(long)]
    pub target: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = parse_rule, default_value = "majority")]
    pub rule: Rule,
    /// Lower end of the η bracket.
    #[arg(long, default_value_t = 0.01)]
    pub eta_lo: f64,
    /// Upper end of the η bracket.
    #[arg(long, default_value_t = 15.0)]
    pub eta_hi: f64,
    /// Accepted gap between achieved and target p_w.
    #[arg(long, default_value_t = 1e-4)]
    pub pw_tol: f64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub template: TemplateArgs,
    /// Target group p_w values, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.05,0.1")]
    pub targets: Vec<f64>,
    #[arg(long, value_parser = parse_grid, default_value = "1:2:21")]
    pub n_grid: Grid,
}

/// Ordered list of group sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid(pub Vec<usize>);

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    let values = if s.contains(':') {
        let parts: Vec<usize> = s.split(':').map(num).collect::<Result<_, _>>()?;
        let (lo, step, hi) = match parts[..] {
            [lo, hi] => (lo, 1, hi),
            [lo, step, hi] => (lo, step, hi),
            _ => return Err(format!("expected lo:hi or lo:step:hi, got {s:?}")),
        };
        if step == 0 || lo > hi {
            return Err(format!("empty or unbounded range {s:?}"));
        }
        (lo..=hi).step_by(step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.contains(&0) {
        return Err("group sizes must be at least 1".into());
    }
    Ok(Grid(values))
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    s.parse().map_err(|e: sda_core::SdaError| e.to_string())
}
