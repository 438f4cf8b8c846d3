use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pixie::enhance::{ModulationStrategy, SccVariant, UpsampleMode};

mod commands;

#[derive(Parser)]
#[command(name = "pixie", version, about = "Low-light enhancement with prompted pixel blocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a P6 image.
    Enhance(EnhanceArgs),
    /// Write seeded initial weights as a PIXW file.
    InitWeights(InitArgs),
    /// Print parameter and MAC counts as TSV.
    Analyze(AnalyzeArgs),
    /// Render a random modulation field under one strategy and report its seam ratio.
    AblateModulation(AblateArgs),
    /// Print PSNR and SSIM between two images.
    Compare(CompareArgs),
    /// Derive deterministic prompt grids from an image and write a PIXT file.
    SynthPrompts(SynthArgs),
}

#[derive(Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// PIXW weights; seeded initial weights from the config when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// PIXT prompt grids matching the padded image.
    #[arg(long, conflicts_with = "synth_seed")]
    pub prompts: Option<PathBuf>,
    /// Seed for synthetic prompts (used when --prompts is absent).
    #[arg(long, default_value_t = 0)]
    pub synth_seed: u64,
    /// JSON pipeline config; fields left out keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Image to score the output against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub scc_variant: Option<SccVariant>,
    /// Also write the effective config as JSON here.
    #[arg(long)]
    pub config_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub scc_variant: Option<SccVariant>,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub strategy: ModulationStrategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output is written to `{prefix}_{strategy}.pgm`.
    #[arg(long)]
    pub out_prefix: String,
    #[arg(long, default_value = "bilinear")]
    pub upsample: UpsampleMode,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Config supplying the layer list and token dimension.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("PIXIE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("PIXIE_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Enhance(a) => commands::enhance(a),
        Command::InitWeights(a) => commands::init_weights(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::AblateModulation(a) => commands::ablate_modulation(a),
        Command::Compare(a) => commands::compare(a),
        Command::SynthPrompts(a) => commands::synth_prompts(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pixie-error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
