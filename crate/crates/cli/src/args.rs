use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "fibwalk",
    version,
    about = "Fibonacci unimodal maps: solver, nest geometry, distortion and induced walks"
)]
pub struct Cli {
    /// Cap on worker threads used by parallel sections
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Find the parameter whose critical orbit has Fibonacci combinatorics to depth K
    Solve(SolveArgs),
    /// Closest returns and the Fibonacci verdict of a map
    Combinatorics(MapCommandArgs),
    /// Principal nest, scaling ratios and inequality rows
    ScalingReport(MapCommandArgs),
    /// Cross-ratio, double-interval and Koebe checks on random monotone branches
    DistortionReport(DistortionArgs),
    /// Check a sequence pair against the scaling condition
    ValidateScaling(ValidateArgs),
    /// Simulate the level walk with i.i.d. increments
    WalkSim(WalkArgs),
    /// Estimate level transition frequencies of the induced map
    EstimateNu(EstimateArgs),
    /// Follow Lebesgue-random points of an annulus under the induced map
    BasinMc(BasinArgs),
    /// Run the commands listed in a manifest file
    Pipeline(PipelineArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Serialize)]
pub struct OutputArgs {
    /// Write the output here instead of standard output
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    /// Critical order, as a decimal
    #[arg(long, default_value = "2")]
    pub ell: String,
    /// Fibonacci depth K
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=60))]
    pub depth: u64,
    /// Precision cap in bits; overrides FIBWALK_PRECISION_CAP
    #[arg(long)]
    pub precision_cap: Option<u32>,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// A map given by a saved solution, by an explicit parameter, or solved on the spot.
#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("source").args(["lambda", "solution"])))]
pub struct MapArgs {
    /// Critical order, as a decimal; taken from the solution file when one is given
    #[arg(long)]
    pub ell: Option<String>,
    /// Fibonacci depth K
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=60))]
    pub depth: u64,
    /// Parameter lambda, as a decimal, instead of solving for it
    #[arg(long)]
    pub lambda: Option<String>,
    /// JSON written by `fibwalk solve`
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Precision cap in bits; overrides FIBWALK_PRECISION_CAP
    #[arg(long)]
    pub precision_cap: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
pub struct MapCommandArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct DistortionArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Number of random configurations
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Largest iterate used by the random configurations
    #[arg(long, default_value_t = 30)]
    pub max_iterate: usize,
    /// Koebe scalings, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub tau: Vec<f64>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("pair_source").args(["input", "geometric", "generated_seed"]).required(true)))]
pub struct ValidateArgs {
    /// JSON file with `pair` and `constants`
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Use a_i = q^i and nu_i = (1-q) q^(i-1) with fitted constants
    #[arg(long)]
    pub geometric: Option<f64>,
    /// Use a randomly generated pair with fitted constants
    #[arg(long)]
    pub generated_seed: Option<u64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("law").args(["weights", "point_mass"]).required(true)))]
pub struct WalkArgs {
    /// Weights nu_1, nu_2, ..., comma separated
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Geometric ratio continuing the weights past the last one given
    #[arg(long, requires = "weights")]
    pub tail_ratio: Option<f64>,
    /// Put all mass on one index j
    #[arg(long)]
    pub point_mass: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub k0: usize,
    #[arg(long)]
    pub r0: i64,
    /// Starting level
    #[arg(long)]
    pub s: i64,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long)]
    pub walkers: usize,
    #[arg(long)]
    pub seed: u64,
    /// Number of walkers whose full traces are kept
    #[arg(long, default_value_t = 0)]
    pub keep_traces: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Source annulus r
    #[arg(long)]
    pub source_level: usize,
    #[arg(long, default_value_t = 10000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    /// Offset d used when fitting scaling constants to the measured pair
    #[arg(long, default_value_t = 0)]
    pub d: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct BasinArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, default_value_t = 10000)]
    pub samples: usize,
    #[arg(long, default_value_t = 200)]
    pub horizon: usize,
    #[arg(long)]
    pub seed: u64,
    /// Return threshold
    #[arg(long, default_value_t = 3)]
    pub r0: usize,
    /// Annulus the walkers start in
    #[arg(long)]
    pub start_level: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct PipelineArgs {
    /// JSON manifest with a `steps` list of argument lists
    #[arg(long)]
    pub manifest: PathBuf,
    /// Keep going after a step fails
    #[arg(long)]
    pub keep_going: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}
