//! `evstack` command-line tool.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "evstack",
    version,
    about = "Faint moving-object detection in event-camera streams"
)]
struct Cli {
    /// Worker threads for per-vector evaluation and corpus generation
    /// (0 = one per core). Outputs do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event file and its ground truth from a scene TOML
    Synth(SynthArgs),
    /// Train the CNN on a synthetic corpus
    Train(TrainArgs),
    /// Run the detector over an event file
    Detect(DetectArgs),
    /// Measure per-window latency on synthetic noise
    Bench(BenchArgs),
    /// Print the distance / apparent-motion table for a sensor
    Geom(GeomArgs),
    /// Convert an event file between CSV and binary
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Binary,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Scene description (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Event file to write
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON to write
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
    /// Override the scene's rng_seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training recipe (TOML); defaults are used for anything omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file to write
    #[arg(long)]
    out: PathBuf,
    /// Training report (JSON)
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    validation_samples: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// L2 penalty on the weights
    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ClassifierArg {
    Cnn,
    MatchedFilter,
}

#[derive(Args)]
pub struct PipelineArgs {
    /// Pipeline configuration (TOML); flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    classifier: Option<ClassifierArg>,
    /// Decision threshold of the selected classifier
    #[arg(long)]
    threshold: Option<f64>,
    /// Frames per stack
    #[arg(long)]
    n: Option<usize>,
    /// Frame exposure in microseconds
    #[arg(long)]
    dt_us: Option<u64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    downsample: Option<usize>,
    /// Largest pool vector magnitude in pixels/frame
    #[arg(long)]
    max_displacement: Option<f64>,
}

#[derive(Args)]
pub struct DetectArgs {
    /// Event file (CSV or binary, detected from content)
    #[arg(long)]
    events: PathBuf,
    /// Model file; required for the CNN classifier
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Detection report (CSV)
    #[arg(long)]
    out: PathBuf,
    /// Run summary (JSON)
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Directory for PGM dumps of each detection's stacked image
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Model file; a seeded untrained model of the right size is used
    /// otherwise
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value_t = 80)]
    width: usize,
    #[arg(long, default_value_t = 60)]
    height: usize,
    #[arg(long, default_value_t = 200)]
    windows: usize,
    /// Background event rate per pixel (events/s)
    #[arg(long, default_value_t = evstack::DEFAULT_BACKGROUND_RATE)]
    background_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Latency report (JSON)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GeomArgs {
    /// Full field of view in degrees
    #[arg(long, default_value_t = 40.0)]
    fov: f64,
    /// Pixels per side
    #[arg(long, default_value_t = 48)]
    matrix: u32,
    /// Transverse speed in m/s
    #[arg(long, default_value_t = 7500.0)]
    speed: f64,
    /// Frame exposure in seconds
    #[arg(long, default_value_t = 0.08)]
    dt: f64,
    /// Largest displacement still detected, pixels/frame
    #[arg(long, default_value_t = 1.5)]
    max_disp: f64,
    /// Distances in metres (comma separated)
    #[arg(long, value_delimiter = ',')]
    distances: Option<Vec<f64>>,
    /// Emit CSV instead of an aligned table
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
pub struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    to: FormatArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: cannot start worker threads: {e}");
        return ExitCode::from(exit::INTERNAL);
    }
    let parallel = rayon::current_num_threads() > 1;
    let outcome = std::panic::catch_unwind(|| match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Detect(a) => commands::detect(a, parallel),
        Command::Bench(a) => commands::bench(a, parallel),
        Command::Geom(a) => commands::geom(a),
        Command::Convert(a) => commands::convert(a),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
        Err(_) => ExitCode::from(exit::INTERNAL),
    }
}
