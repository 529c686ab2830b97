//! The `rulecritic` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed input data, 3 runtime
//! failure. Relative output paths are resolved against `RULECRITIC_OUT_DIR`
//! when it is set; nothing else is read from the environment.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

pub use manifest::Manifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable that relocates relative output paths.
pub const OUT_DIR_VAR: &str = "RULECRITIC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "rulecritic", version, about = "Traffic-rule robustness, lattice planning and value-critic training")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Experiment config (`[section]` headers, `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a highD-style meta/tracks CSV pair into a scenario archive.
    Ingest(IngestArgs),
    /// Generate a seeded synthetic scenario archive.
    Synth(SynthArgs),
    /// Train the critic on one rule phase.
    Train(TrainArgs),
    /// Drive episodes and report rule compliance.
    Evaluate(EvaluateArgs),
    /// Write value or robustness grids.
    Heatmap(HeatmapArgs),
    /// Drive one episode and write the ego trajectory and robustness trace.
    Replay(ReplayArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    tracks: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Ego driving direction, overriding the meta file.
    #[arg(long)]
    direction: Option<DirectionArg>,
    /// Start distance window before the goal, metres.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    start_window: Option<Vec<f64>>,
    #[arg(long)]
    start_speed: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Forward,
    Backward,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    lanes: usize,
    #[arg(long, default_value_t = 8)]
    vehicles: usize,
    /// Road length, metres.
    #[arg(long, default_value_t = 500.0)]
    length: f64,
    /// Seconds of traffic.
    #[arg(long, default_value_t = 40.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    lane_changes: usize,
    /// Let one leader brake hard after 10 s.
    #[arg(long)]
    braking: bool,
    /// Insert a no-overtaking sign at a seeded position in [100, 350] m.
    #[arg(long, conflicts_with = "sign_at")]
    sign: bool,
    /// Insert a no-overtaking sign at this position, metres.
    #[arg(long)]
    sign_at: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Scenario archives to train on.
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    #[arg(long, default_value = "critic.rhnet")]
    checkpoint: PathBuf,
    #[arg(long, default_value = "metrics.csv")]
    metrics: PathBuf,
    /// Rule phase, overriding `training.phase`.
    #[arg(long)]
    phase: Option<String>,
    /// Total steps, overriding `training.total_steps`.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    /// Critic for the value cost term; without one the baseline planner runs.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    /// JSON report path; printed to stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Quantity {
    Value,
    Robustness,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    quantity: Quantity,
    #[arg(long, default_value = "I6")]
    rule: String,
    /// Required for `--quantity value`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Ego template speed, m/s (default `eval.ego_speed`).
    #[arg(long)]
    speed: Option<f64>,
    /// Scenario step of the traffic snapshot (default `eval.step`).
    #[arg(long)]
    step: Option<usize>,
    #[arg(long)]
    cell_length: Option<f64>,
    #[arg(long)]
    cell_width: Option<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "trajectory.csv")]
    trajectory: PathBuf,
    #[arg(long, default_value = "trace.csv")]
    trace: PathBuf,
    /// Directory for one candidate CSV per planning call.
    #[arg(long)]
    plan_dump: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<rulecritic::Error> for CliError {
    fn from(e: rulecritic::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                rulecritic::Error::from(e).into()
            }
        }
    )*};
}

from_core!(
    rulecritic::scenario::ScenarioError,
    rulecritic::rules::RuleError,
    rulecritic::planner::PlannerError,
    rulecritic::critic::CriticError,
    rulecritic::train::TrainError,
    rulecritic::eval::EvalError,
    rulecritic::config::ConfigError
);

/// Writing an output failed.
fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Output path after applying the output-directory override.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if path.is_relative() && !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let name = subcommand_name(&cli.command);
    let result = match cli.global.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::run(&cli.global, &cli.command)),
            Err(e) => Err(CliError::Runtime(format!("cannot start {n} workers: {e}"))),
        },
        None => commands::run(&cli.global, &cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            if let CliError::Usage(_) = e {
                let mut cmd = Cli::command();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            e.code()
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Synth(_) => "synth",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Heatmap(_) => "heatmap",
        Command::Replay(_) => "replay",
        Command::Version => "version",
    }
}
