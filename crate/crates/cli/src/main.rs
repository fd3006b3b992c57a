mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "walkguide", version, about = "Streaming walking guidance: replay, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay a frame directory through the engine and write the event log.
    Run(RunArgs),
    /// Score text pairs, trigger predictions or judge comparisons.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Train, check or evaluate the trigger gate.
    #[command(subcommand)]
    Tap(TapCommand),
    /// Validate annotation files.
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Generate synthetic inputs.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendChoice {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AverageChoice {
    Macro,
    Micro,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// Overrides the backend kind from the config file.
    #[arg(long, value_enum)]
    backend: Option<BackendChoice>,
    /// Canned replies for the mock backend (JSON table).
    #[arg(long)]
    mock_responses: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    tap_model: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Read one question per tick from standard input; `:quit` stops.
    #[arg(long)]
    interactive: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// ROUGE-1/2/L and TF-IDF over `{id, reference, candidate}` lines.
    Text {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trigger-level F1. Each file holds one level per line, or is an event log.
    Trf {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        average: Option<AverageChoice>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Order-swapped pairwise judging over `{ground_truth, answer_a, answer_b}` lines.
    Judge {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Debug, Subcommand)]
enum TapCommand {
    /// Train a gate on samples and write the model plus its loss history.
    Train {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Loss history output; defaults to `<out>.history.json`.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compare analytic and finite-difference gradients of a fresh gate.
    #[command(alias = "check")]
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Print accuracy and trigger-level F1 of a model on samples.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        frames: PathBuf,
    },
    /// Write a brightness-coded dataset (frames plus samples.jsonl).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        n_history: usize,
        #[arg(long, default_value_t = 32)]
        frame_size: u32,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        first_index: u64,
    },
}

#[derive(Debug, Subcommand)]
enum AnnotateCommand {
    /// Parse, re-serialize and re-parse; report event counts per code.
    Check { file: PathBuf },
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Write a synthetic walk: frames, detections and a mock reply table.
    Stream {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        count: usize,
        #[arg(long, default_value_t = 2.0)]
        fps: f64,
        #[arg(long, default_value_t = 64)]
        width: u32,
        #[arg(long, default_value_t = 48)]
        height: u32,
        #[arg(long, default_value_t = 5)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
