mod commands;
mod manifest;
mod setup;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Detect and cleanse noisy in-context demonstrations.
#[derive(Debug, Parser)]
#[command(name = "cleanscore", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corrupt a fraction of annotations and record gold flags.
    Inject(commands::InjectArgs),
    /// Score every demonstration, fit the mixture and partition the dataset.
    Detect(commands::DetectArgs),
    /// Drop or replace detected-noisy demonstrations.
    Cleanse(commands::CleanseArgs),
    /// Retrieve demonstrations and generate answers for test queries.
    Icl(commands::IclArgs),
    /// Rebuild the detection report from a scored table and gold flags.
    Report(commands::ReportArgs),
    /// Sweep gamma and the neighbour count.
    Sweep(commands::SweepArgs),
    /// Write a synthetic corpus, scorer spec and config for demos.
    Synth(commands::SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyFlag {
    Remove,
    Replace,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RetrieverFlag {
    Random,
    Topk,
    Dpp,
}

/// Flags shared by every command that builds a pipeline config. Each flag
/// overrides the matching config-file field.
#[derive(Debug, Clone, Args)]
pub struct PipelineFlags {
    /// JSON config with PipelineConfig field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Metric backend: `synthetic` or a scoring server URL.
    #[arg(long)]
    pub backend: Option<String>,
    /// Inference backend: `synthetic` or a server URL.
    #[arg(long)]
    pub inference_backend: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub n_neighbor: Option<usize>,
    /// Neighbour corpus: `in` or `out:PATH`.
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyFlag>,
    #[arg(long, value_enum)]
    pub retriever: Option<RetrieverFlag>,
    /// Demonstrations per prompt; 0 gives zero-shot prompts.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Template name (nq, webq, sciq, squad) or JSON file.
    #[arg(long)]
    pub template: Option<String>,
}

/// How a failed command maps to the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input files: exit 2.
    Usage(anyhow::Error),
    /// Anything that went wrong while running: exit 1.
    Runtime(anyhow::Error),
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn usage(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Inject(a) => commands::inject(a),
        Command::Detect(a) => commands::detect(a),
        Command::Cleanse(a) => commands::cleanse(a),
        Command::Icl(a) => commands::icl(a),
        Command::Report(a) => commands::report(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
