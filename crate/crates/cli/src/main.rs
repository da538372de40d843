use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iidm::SamplerMode;

mod commands;
mod manifest;

/// Image-to-image diffusion toolkit.
#[derive(Debug, Parser)]
#[command(name = "iidm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a denoiser on a directory of `NAME.png` / `NAME.mask.png` pairs.
    Train(TrainArgs),
    /// Synthesize an image from a mask and a style reference.
    Sample(SampleArgs),
    /// Run further refinement rounds on a generated image.
    Refine(RefineArgs),
    /// Match an image's lαβ statistics to a reference.
    ColorTransfer(ColorTransferArgs),
    /// Average checkpoints elementwise.
    Ensemble(EnsembleArgs),
    /// Score generated images against references.
    Eval(EvalArgs),
    /// Write the noise schedule as CSV.
    ScheduleDump(ScheduleDumpArgs),
    /// Write a labeled-Gaussian toy dataset.
    MakeToy(MakeToyArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    style: PathBuf,
    /// Checkpoints; more than one are averaged. Defaults to the config's list.
    #[arg(long, num_args = 1..)]
    ckpt: Vec<PathBuf>,
    /// Pipeline config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Codec weight file; defaults to the config's codec kind.
    #[arg(long)]
    codec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_start: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    color_transfer: Option<bool>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SamplerMode>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Generated image to refine.
    #[arg(long)]
    image: PathBuf,
    /// Index of the first refinement round; noise streams are keyed by it.
    /// Defaults to the configured round count.
    #[arg(long)]
    first_round: Option<u64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct ColorTransferArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    gen: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// JSON with externally measured `mask_accuracy` and `aesthetic`.
    #[arg(long)]
    external: Option<PathBuf>,
    #[arg(long, default_value_t = iidm::imaging::DEFAULT_BINS)]
    bins: usize,
}

#[derive(Debug, Args)]
pub struct ScheduleDumpArgs {
    #[arg(long, default_value_t = iidm::schedule::DEFAULT_T_MAX)]
    t_max: usize,
    #[arg(long, default_value_t = iidm::schedule::DEFAULT_SLOPE)]
    slope: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MakeToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    count: usize,
    #[arg(long, default_value_t = 16)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a random-palette style reference per mask.
    #[arg(long)]
    styles: bool,
}

fn parse_mode(s: &str) -> Result<SamplerMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown sampler mode {s:?} (expected ddpm-standard or literal)"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Sample(a) => commands::sample(a),
        Command::Refine(a) => commands::refine(a),
        Command::ColorTransfer(a) => commands::color_transfer(a),
        Command::Ensemble(a) => commands::ensemble(a),
        Command::Eval(a) => commands::eval(a),
        Command::ScheduleDump(a) => commands::schedule_dump(a),
        Command::MakeToy(a) => commands::make_toy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
