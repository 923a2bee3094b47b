//! `salvage`: command-line frontend for the split planner, utility model,
//! cluster admission and interval simulator.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::Failure;

/// Overrides the directory holding `system.json` and `sim_memory_bound.json`.
pub const CONFIG_DIR_ENV: &str = "SALVAGE_CONFIG_DIR";
pub const DEFAULT_CONFIG_DIR: &str = "configs";

#[derive(Parser, Debug)]
#[command(
    name = "salvage",
    version,
    about = "I/O bandwidth salvaging: planning, utility and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Salvage-memory utility table as CSV.
    Utility(UtilityArgs),
    /// Optimal split over a demand sweep for salvage-memory variants, as CSV.
    SplitCurve(SplitCurveArgs),
    /// Precompute the split curve set over the availability grid.
    GenCurves(GenCurvesArgs),
    /// Look up the split for a workload on a server.
    Plan(PlanArgs),
    /// Admit a workload onto a server state file.
    Deploy(DeployArgs),
    /// Remove a finished workload from a server state file.
    Complete(CompleteArgs),
    /// Run the interval simulator.
    Simulate(SimulateArgs),
    /// Evaluate AMAT at one split and demand.
    Amat(AmatArgs),
}

#[derive(Args, Debug)]
pub struct UtilityArgs {
    /// Pod sizes: a list `1,4,16` or an inclusive range `1..16`.
    #[arg(long, default_value = "1..16")]
    pub n: String,
    /// Link idle probabilities, comma separated.
    #[arg(long, default_value = "0.05,0.2,0.5")]
    pub p: String,
    /// Memory-to-link bandwidth ratios, comma separated.
    #[arg(long, default_value = "1")]
    pub x: String,
    /// Monte Carlo samples per row.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SplitCurveArgs {
    /// System config; defaults to `system.json` in the config directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Salvage variants as `PREMIUM_NS@BOOST`, e.g. `50@0.5`. Repeatable.
    #[arg(long = "variant", default_values_t = ["50@0.5".to_string(), "200@0.5".to_string(), "50@1".to_string(), "200@1".to_string()])]
    pub variants: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub demand_min: f64,
    #[arg(long, default_value_t = 60.0)]
    pub demand_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub demand_step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenCurvesArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file for the curve set.
    #[arg(long)]
    pub out: PathBuf,
    /// Refuse grids with more availability points than this.
    #[arg(long, default_value_t = salvage_core::splitplan::DEFAULT_GRID_CAP)]
    pub grid_cap: usize,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Curve set from `gen-curves`.
    #[arg(long)]
    pub curves: PathBuf,
    /// Server state; omitted means a server at full availability.
    #[arg(long)]
    pub server: Option<PathBuf>,
    /// Workload profile file.
    #[arg(long, conflicts_with = "demand", required_unless_present = "demand")]
    pub workload: Option<PathBuf>,
    /// Workload demand in GB/s, instead of a profile.
    #[arg(long)]
    pub demand: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DeployArgs {
    #[arg(long)]
    pub curves: PathBuf,
    /// Server state file, updated in place on acceptance.
    #[arg(long)]
    pub server: PathBuf,
    #[arg(long)]
    pub workload: PathBuf,
    /// I/O level at or above which a workload counts as I/O-intensive.
    #[arg(long, default_value_t = salvage_core::cluster::DEFAULT_IO_HEAVY_THRESHOLD)]
    pub io_heavy_threshold: f64,
    /// Append JSON-lines events here as well as printing them.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompleteArgs {
    #[arg(long)]
    pub server: PathBuf,
    /// Name of the finished workload.
    #[arg(long)]
    pub workload: String,
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Simulation config; defaults to `sim_memory_bound.json` in the config directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// I/O scenario `RX_TX` with levels low, med, high, e.g. `low_high`.
    #[arg(long)]
    pub io: Option<String>,
    /// Override the configured split.
    #[arg(long)]
    pub r_star: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub demand_cv: Option<f64>,
    /// Directory for metrics.csv, summary.json and manifest.json.
    #[arg(long, default_value = "sim_out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct AmatArgs {
    /// Fraction of traffic sent to primary memory.
    #[arg(long)]
    pub r: f64,
    /// Demand in GB/s.
    #[arg(long)]
    pub demand: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(failure::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Utility(a) => commands::utility(&a),
        Command::SplitCurve(a) => commands::split_curve(&a),
        Command::GenCurves(a) => commands::gen_curves(&a),
        Command::Plan(a) => commands::plan(&a),
        Command::Deploy(a) => commands::deploy(&a),
        Command::Complete(a) => commands::complete(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Amat(a) => commands::amat(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
