//! `gda` command line.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 configuration
//! error, 4 remote transport or response error.

mod diagnose;
mod pipeline;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use diagnose::{cmd_diagnose, DiagnoseArgs};
pub use pipeline::{cmd_pipeline, DataSource, RunConfig, RunSummary};

use crate::casedata::{generate_synthetic_cases, uniform_mix, write_cases};
use crate::error::Error;
use crate::icl::{OrderingStrategy, RewardMode, SelectionStrategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::BudgetExceeded { .. } => EXIT_CONFIG,
        Error::Transport { .. } | Error::Format { .. } => EXIT_TRANSPORT,
        _ => EXIT_INPUT,
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Literal,
    Heldout,
}

impl From<ModeArg> for RewardMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Literal => RewardMode::Literal,
            ModeArg::Heldout => RewardMode::Heldout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Exhaustive,
    Greedy,
}

impl StrategyArg {
    pub fn selection(self) -> SelectionStrategy {
        match self {
            StrategyArg::Exhaustive => SelectionStrategy::Exhaustive,
            StrategyArg::Greedy => SelectionStrategy::Greedy,
        }
    }

    pub fn ordering(self) -> OrderingStrategy {
        match self {
            StrategyArg::Exhaustive => OrderingStrategy::Exhaustive,
            StrategyArg::Greedy => OrderingStrategy::GreedyInsertion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Mock,
    Remote,
}

impl BackendArg {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendArg::Mock => "mock",
            BackendArg::Remote => "remote",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gda", version, about = "Growth-and-development assessment pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run generation, bone-age training, fusion, selection, ordering,
    /// training, evaluation and advice end to end.
    Pipeline(PipelineArgs),
    /// Diagnose the cases in a case file against a run's exemplars.
    Diagnose(DiagnoseArgs),
    /// Write synthetic cases to a case file.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Generate this many synthetic cases.
    #[arg(long, conflicts_with = "data")]
    pub synthetic: Option<usize>,
    /// Read cases from a case file instead.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Exemplars to select.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Heldout)]
    pub mode: ModeArg,
    /// Applies to both selection and ordering.
    #[arg(long, value_enum, default_value_t = StrategyArg::Greedy)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value_t = BackendArg::Mock)]
    pub backend: BackendArg,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Embedding dimension.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Reward evaluations allowed per search.
    #[arg(long, default_value_t = crate::icl::DEFAULT_BUDGET)]
    pub budget: u64,
    /// Neighbors per case in the similarity graph.
    #[arg(long, default_value_t = 3)]
    pub neighbors: usize,
    /// Synthetic radiographs for the bone-age regressor.
    #[arg(long, default_value_t = 100)]
    pub boneage_images: usize,
    /// Square side of the regressor input.
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
    /// Also train the graph layer weight.
    #[arg(long)]
    pub train_gnn: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn report(err: StageError, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "error: {err}");
    if let Error::Format { raw_response, .. } = &err.error {
        let _ = writeln!(stderr, "raw response: {raw_response}");
    }
    exit_code(&err.error)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Pipeline(args) => RunConfig::from_args(&args)
            .stage("config")
            .and_then(|cfg| cmd_pipeline(&cfg, stdout).map(|_| ())),
        Command::Diagnose(args) => cmd_diagnose(&args, stdout),
        Command::Generate(args) => generate_synthetic_cases(args.n, args.seed, &uniform_mix())
            .and_then(|cases| write_cases(&args.out, &cases))
            .map(|_| {
                let _ = writeln!(stdout, "wrote {} cases to {}", args.n, args.out.display());
            })
            .stage("generate"),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report(e, stderr),
    }
}
