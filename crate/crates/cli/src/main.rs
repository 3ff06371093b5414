//! `pasta`: synthesise grid flows, inspect spatial autocorrelation, train,
//! evaluate and query the forecasting model.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "pasta", version, about = "Grid crowd-flow forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic flow sequence with peak-hour hotspots.
    Synth(SynthArgs),
    /// Local Moran's I and LISA quadrants of one frame.
    Moran(MoranArgs),
    /// Train a model and write checkpoints plus the loss history.
    Train(TrainArgs),
    /// Score a checkpoint, a naive baseline, or every ablation variant on the test window.
    Eval(EvalArgs),
    /// Forecast one frame in raw units.
    Predict(PredictArgs),
    /// Dump temporal attention weights with channel labels.
    Attention(AttentionArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    m: usize,
    #[arg(long, default_value_t = 35)]
    days: usize,
    /// Minutes between frames.
    #[arg(long, default_value_t = 60)]
    interval: u32,
    /// Hotspot cells as `row,col;row,col`. Defaults to one per map quarter.
    #[arg(long)]
    hotspots: Option<String>,
    /// Standard deviation of the additive noise.
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, env = "PASTA_SEED", default_value_t = 42)]
    seed: u64,
    /// First timestamp, `YYYY-MM-DDTHH:MM:SS`.
    #[arg(long)]
    start: Option<String>,
}

#[derive(Args, Debug)]
struct MoranArgs {
    /// Flow sequence file.
    #[arg(long)]
    data: PathBuf,
    /// Frame index.
    #[arg(long)]
    t: usize,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

/// Where the data comes from and how it is split.
#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Flow sequence file.
    #[arg(long)]
    data: PathBuf,
    /// Holiday dates, one `YYYY-MM-DD` per line.
    #[arg(long)]
    holidays: Option<PathBuf>,
    /// Length of the test window at the end of the sequence.
    #[arg(long, default_value_t = 7)]
    test_days: usize,
    /// Share of training-period samples held out for validation.
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
}

#[derive(Args, Debug, Clone)]
struct FragmentArgs {
    /// Recent frames, one per hour.
    #[arg(long, default_value_t = 5)]
    closeness: usize,
    /// Same time on previous days.
    #[arg(long, default_value_t = 6)]
    periodic: usize,
    /// Same time in previous weeks.
    #[arg(long, default_value_t = 4)]
    trend: usize,
}

#[derive(Args, Debug, Clone)]
struct OptimArgs {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    huber_delta: f64,
    #[arg(long, env = "PASTA_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct ModuleArgs {
    /// Disable the spatial auto-correlation gate.
    #[arg(long)]
    no_sag: bool,
    /// Disable the temporal attention gate.
    #[arg(long)]
    no_tag: bool,
    /// Use a single 3x3 branch instead of the multi-scale block.
    #[arg(long)]
    no_msr: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fragments: FragmentArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    modules: ModuleArgs,
    /// Receives best.json, final.json and history.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Write zero epoch durations so the history is reproducible byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint written by `pasta train`.
    #[arg(long, conflicts_with_all = ["baseline", "ablation"])]
    checkpoint: Option<PathBuf>,
    /// Score a naive predictor: `persistence` or `historical-average`.
    #[arg(long, conflicts_with = "ablation")]
    baseline: Option<String>,
    /// Train and score every module variant.
    #[arg(long)]
    ablation: bool,
    /// Cell subsets to report: `all`, `hl`, `lh`. Repeatable.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    segment: Vec<String>,
    /// Cells whose true value is below this are left out of MAPE.
    #[arg(long, default_value_t = pasta_core::eval::DEFAULT_MAPE_THRESHOLD)]
    threshold: f64,
    /// Fragment counts for baselines and ablation runs; a checkpoint carries its own.
    #[command(flatten)]
    fragments: FragmentArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Flow sequence file.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint written by `pasta train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Holiday dates, one `YYYY-MM-DD` per line.
    #[arg(long)]
    holidays: Option<PathBuf>,
    /// Target timestamp, `YYYY-MM-DDTHH:MM:SS`. Defaults to the frame after the last one.
    #[arg(long)]
    at: Option<String>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AttentionArgs {
    /// Flow sequence file.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint written by `pasta train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Holiday dates, one `YYYY-MM-DD` per line.
    #[arg(long)]
    holidays: Option<PathBuf>,
    /// Dump the samples of this many final days.
    #[arg(long, default_value_t = 7)]
    test_days: usize,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Moran(a) => commands::moran(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Attention(a) => commands::attention(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            let message = first.trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(message));
            return ExitCode::from(error::USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code)
        }
    }
}
