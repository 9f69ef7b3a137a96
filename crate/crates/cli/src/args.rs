use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use florae::presets::{DEFAULT_HEIGHT, DEFAULT_WIDTH};
use florae::{Architecture, MutatorConfig, PresetName};

#[derive(Debug, Parser)]
#[command(name = "florae", version, about = "Falling-sand plant biome simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one world and write a run record, stats CSV and frames.
    Run(RunArgs),
    /// Evaluate parameters over independent replicas.
    Eval(EvalArgs),
    /// Meta-evolve parameters with PGPE.
    Meta(MetaArgs),
    /// Re-run a record and check every state digest.
    Replay(ReplayArgs),
    /// Serve the interactive evolution HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Persistence,
    Collaboration,
    Sideways,
    Pestilence,
}

impl From<PresetArg> for PresetName {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Persistence => PresetName::Persistence,
            PresetArg::Collaboration => PresetName::Collaboration,
            PresetArg::Sideways => PresetName::Sideways,
            PresetArg::Pestilence => PresetName::Pestilence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MutatorArg {
    Basic,
    Adaptive,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Minimal,
    Extended,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Minimal => Architecture::Minimal,
            ArchArg::Extended => Architecture::Extended,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetaMode {
    E2e,
    Petri,
}

#[derive(Debug, Clone, Args)]
pub struct WorldArgs {
    #[arg(long, value_enum, default_value = "persistence")]
    pub preset: PresetArg,
    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    pub width: usize,
    #[arg(long, default_value_t = DEFAULT_HEIGHT)]
    pub height: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Parameter file (binary `.flpr`, or a JSON array of numbers). Defaults to
    /// the hand-written initial policy.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Architecture of the initial policy when no params file is given.
    #[arg(long, value_enum, default_value = "minimal")]
    pub arch: ArchArg,
    #[arg(long, value_enum, default_value = "basic")]
    pub mutator: MutatorArg,
    /// Mutation scale (initial scale for the adaptive mutator).
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
}

impl PolicyArgs {
    pub fn mutator_config(&self) -> MutatorConfig {
        match self.mutator {
            MutatorArg::Basic => MutatorConfig::basic(self.sigma),
            MutatorArg::Adaptive => MutatorConfig::adaptive(self.sigma),
            MutatorArg::None => MutatorConfig::disabled(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Store a state digest every this many steps (0: only first and last).
    #[arg(long, default_value_t = 100)]
    pub snapshot_every: u64,
    /// Keep a GIF frame every this many steps.
    #[arg(long, default_value_t = 10)]
    pub frame_every: u64,
    /// Pixels per cell in images.
    #[arg(long, default_value_t = 4)]
    pub scale: u32,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 16)]
    pub reps: usize,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MetaArgs {
    #[arg(long, value_enum, default_value = "petri")]
    pub mode: MetaMode,
    /// World used by e2e mode. Petri mode uses only `--preset` and `--seed`.
    #[command(flatten)]
    pub world: WorldArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Replicas per candidate in e2e mode.
    #[arg(long, default_value_t = 4)]
    pub reps: usize,
    #[arg(long, default_value_t = 30)]
    pub outer_steps: usize,
    #[arg(long, default_value_t = 32)]
    pub pop_size: usize,
    #[arg(long)]
    pub center_lr: Option<f64>,
    #[arg(long)]
    pub init_std: Option<f64>,
    /// Write the current center and best parameters every this many outer steps.
    #[arg(long, default_value_t = 5)]
    pub checkpoint_every: usize,
    #[arg(long, default_value = "meta_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub record: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}
