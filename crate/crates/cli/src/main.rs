//! `riskdrive`: run scenarios, dump plans and risk fields, learn lane
//! preferences from recorded traffic and validate the planner against it.
//!
//! Exit status is 0 on success, 1 when a file cannot be read or written and
//! 2 when an input or the configuration is invalid.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "riskdrive", version, about = "Risk-field lane planning on highways")]
struct Cli {
    /// TOML model configuration; missing keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario in closed loop.
    Simulate(SimulateArgs),
    /// Plan once from the scenario's initial state.
    Plan(PlanArgs),
    /// Sample the predicted risk field at one time step.
    RiskField(RiskFieldArgs),
    /// Learn a lane-preference table from a trajectory CSV.
    LearnParams(LearnArgs),
    /// Replay recorded lane changes with the planner in the loop.
    Validate(ValidateArgs),
    /// Write the effective configuration as TOML.
    PrintConfig,
}

#[derive(Debug, Args)]
struct PreferenceArgs {
    /// Lane-preference table JSON; the built-in table is used otherwise.
    #[arg(long)]
    preference: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    preference: PreferenceArgs,
}

#[derive(Debug, Args)]
struct PlanArgs {
    scenario: PathBuf,
    /// Planning threshold; overrides the style and scenario values. Zero is allowed.
    #[arg(long)]
    threshold: Option<f64>,
    /// Also print the plan JSON on stdout.
    #[arg(long)]
    stdout: bool,
    #[command(flatten)]
    preference: PreferenceArgs,
}

#[derive(Debug, Args)]
struct RiskFieldArgs {
    scenario: PathBuf,
    /// Trajectory point to sample, 1-based.
    #[arg(long, default_value_t = 1)]
    step: usize,
    /// Lateral cell size, m.
    #[arg(long, default_value_t = 0.25)]
    dx: f64,
    /// Longitudinal cell size, m.
    #[arg(long, default_value_t = 1.0)]
    dy: f64,
    /// Metres sampled behind the ego.
    #[arg(long, default_value_t = 30.0)]
    behind: f64,
    /// Metres sampled ahead of the ego.
    #[arg(long, default_value_t = 120.0)]
    ahead: f64,
    /// Also write an SVG heatmap.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitArg {
    Meters,
    Feet,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Half {
    All,
    Train,
    Validate,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = UnitArg::Meters)]
    units: UnitArg,
    #[arg(long, default_value_t = 5)]
    lanes: usize,
    /// Lane width in metres.
    #[arg(long, default_value_t = 3.66)]
    lane_width: f64,
    /// Smoothing window, s.
    #[arg(long, default_value_t = 1.0)]
    window: f64,
    /// Vehicles used: all, or one half of a split by a hash of the vehicle id.
    #[arg(long, value_enum, default_value_t = Half::All)]
    half: Half,
}

#[derive(Debug, Args)]
struct LearnArgs {
    #[command(flatten)]
    data: DatasetArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Planner,
    Identity,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Planner)]
    model: ModelArg,
    /// Fixed desired speed, m/s; the recorded speed at the start of each run otherwise.
    #[arg(long)]
    desired_speed: Option<f64>,
    #[command(flatten)]
    preference: PreferenceArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
