mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand};
use saferec_core::hcope::DEFAULT_BOOTSTRAP;
use saferec_core::safe::{CandidateVariant, DaedalusVariant};
use saferec_core::traj::DEFAULT_MAX_LEN;
use saferec_core::{BoundMethod, Estimator};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "saferec", version, about = "Safe recommendation toolkit: high-confidence off-policy evaluation, safe improvement and user-model planning")]
struct Cli {
    /// Worker threads; defaults to the available parallelism. Outputs do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// High-confidence lower bound on a policy's value from logged trajectories
    Bound(BoundArgs),
    /// Greedy or fitted-Q training with validation bounds
    Fqi(FqiArgs),
    /// One round of safe policy improvement
    Improve(ImproveArgs),
    /// Incremental safe improvement against a simulator
    Daedalus(DaedalusArgs),
    /// Time-series forecast of off-policy estimates on drifting logs
    Nope(NopeArgs),
    /// Probabilistic suffix trees
    #[command(subcommand)]
    Pst(PstCommand),
    /// Posterior sampling over user propensities on a suffix-tree model
    Psrl(PsrlArgs),
    /// Capacity-constrained planning for users of hidden type
    Capacity(CapacityArgs),
    /// Log trajectories from a simulator
    Sim(SimArgs),
    /// Calibration experiments
    #[command(subcommand)]
    Calibrate(CalibrateCommand),
}

#[derive(Args, Serialize)]
pub struct BoundArgs {
    /// Trajectory log (JSON lines)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Evaluation policy (JSON)
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value = "ci")]
    pub method: BoundMethod,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value = "is")]
    pub estimator: Estimator,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Bootstrap resamples for BCa
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    /// Required for BCa
    #[arg(long)]
    pub seed: Option<u64>,
    /// Size of a future sample to predict for, instead of the mean
    #[arg(long)]
    pub m: Option<usize>,
    /// δ values for a risk table
    #[arg(long, value_delimiter = ',')]
    pub risk: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Fqi,
    Greedy,
}

#[derive(Args, Serialize)]
pub struct FqiArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TrainMode::Fqi)]
    pub mode: TrainMode,
    /// Fitted-Q iterations
    #[arg(long = "K", visible_alias = "k", default_value_t = 20)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value = "tt")]
    pub method: BoundMethod,
    /// Fraction of features kept by information gain
    #[arg(long, default_value_t = 0.2)]
    pub keep_fraction: f64,
    /// Defaults to one more than the largest logged action
    #[arg(long)]
    pub n_actions: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantArg {
    None,
    Kfold,
}

impl From<VariantArg> for CandidateVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::None => CandidateVariant::None,
            VariantArg::Kfold => CandidateVariant::KFold,
        }
    }
}

#[derive(Args, Serialize)]
pub struct ImproveArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub rho_minus: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value = "ci")]
    pub method: BoundMethod,
    #[arg(long, value_enum, default_value_t = VariantArg::Kfold)]
    pub variant: VariantArg,
    #[arg(long, default_value = "is")]
    pub estimator: Estimator,
    /// Initial policy π0; uniform when absent
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Fourier basis order of the candidate softmax policies
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Objective evaluations per candidate search
    #[arg(long, default_value_t = 400)]
    pub budget: usize,
    #[arg(long)]
    pub n_actions: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Simulator source: a JSON file or a built-in preset.
#[derive(Args, Serialize)]
pub struct EnvSource {
    /// Environment specification (JSON)
    #[arg(long, conflicts_with = "preset")]
    pub env: Option<PathBuf>,
    /// chain, funnel, two_state or click_stream
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DaedalusArg {
    D1,
    D2,
}

impl From<DaedalusArg> for DaedalusVariant {
    fn from(v: DaedalusArg) -> Self {
        match v {
            DaedalusArg::D1 => DaedalusVariant::D1,
            DaedalusArg::D2 => DaedalusVariant::D2,
        }
    }
}

#[derive(Args, Serialize)]
pub struct DaedalusArgs {
    #[command(flatten)]
    pub source: EnvSource,
    /// Trajectories per iteration; the last value repeats
    #[arg(long, value_delimiter = ',', default_value = "50,100,500")]
    pub beta: Vec<usize>,
    #[arg(long, value_enum, default_value_t = DaedalusArg::D2)]
    pub variant: DaedalusArg,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long)]
    pub rho_minus: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value = "ci")]
    pub method: BoundMethod,
    #[arg(long, value_enum, default_value_t = VariantArg::Kfold)]
    pub search: VariantArg,
    /// Keep k-fold candidate selection after the first acceptance
    #[arg(long)]
    pub kfold_always: bool,
    #[arg(long)]
    pub stop_at_first_accept: bool,
    #[arg(long)]
    pub initial: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    #[arg(long, default_value_t = 400)]
    pub budget: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct NopeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    /// Trajectories per bin
    #[arg(long, default_value_t = 500, conflicts_with = "bin_time")]
    pub bin: usize,
    /// Bin by timestamp windows of this width instead
    #[arg(long)]
    pub bin_time: Option<f64>,
    #[arg(long, default_value = "is")]
    pub estimator: Estimator,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PstCommand {
    /// Fit a tree to comma-separated symbol sequences, one per line
    Fit(PstFitArgs),
}

#[derive(Args, Serialize)]
pub struct PstFitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_count: usize,
    /// Drop leaves within this L1 distance of their parent
    #[arg(long, default_value_t = 0.0)]
    pub prune_epsilon: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleArg {
    Doubling,
    Greedy,
}

#[derive(Args, Serialize)]
pub struct PsrlArgs {
    #[arg(long)]
    pub pst: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,10,20")]
    pub thetas: Vec<f64>,
    /// Steps to run
    #[arg(long = "T", visible_alias = "horizon", default_value_t = 10_000)]
    pub horizon: usize,
    /// Hidden propensity of the simulated user; drawn from the uniform prior when absent
    #[arg(long)]
    pub theta_star: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Doubling)]
    pub schedule: ScheduleArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct CapacityArgs {
    /// One family, or an array with one family per agent
    #[arg(long)]
    pub family: PathBuf,
    #[arg(long)]
    pub caps: PathBuf,
    /// Number of agents sharing a single family
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub min_prob: f64,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct SimArgs {
    #[command(flatten)]
    pub source: EnvSource,
    /// Behavior policy; uniform when absent
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Episode index of the first trajectory, for drifting environments
    #[arg(long, default_value_t = 0)]
    pub first_episode: usize,
    /// Print the environment specification instead of simulating
    #[arg(long)]
    pub print_env: bool,
    #[arg(long, required_unless_present = "print_env")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CalibrateCommand {
    /// Error rates of the CI, TT and BCa bounds on gamma-distributed samples
    Fig1(Fig1Args),
}

#[derive(Args, Serialize)]
pub struct Fig1Args {
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "20,50,100,200,500,1000,2000")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub shape: f64,
    #[arg(long, default_value_t = 50.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub enum Failure {
    Usage(String),
    Domain(String),
}

impl From<saferec_core::Error> for Failure {
    fn from(e: saferec_core::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Bound(a) => commands::bound(a),
        Command::Fqi(a) => commands::fqi(a),
        Command::Improve(a) => commands::improve(a),
        Command::Daedalus(a) => commands::daedalus(a),
        Command::Nope(a) => commands::nope(a),
        Command::Pst(PstCommand::Fit(a)) => commands::fit_tree(a),
        Command::Psrl(a) => commands::psrl(a),
        Command::Capacity(a) => commands::capacity(a),
        Command::Sim(a) => commands::sim(a),
        Command::Calibrate(CalibrateCommand::Fig1(a)) => commands::fig1(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
