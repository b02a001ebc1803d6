//! `cuewatch`: behavioral cue detection from multimodal feature streams.

mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cuewatch_core::feature::ChannelSchema;

use crate::args::ModelArgs;

#[derive(Parser, Debug)]
#[command(name = "cuewatch", version, about = "Detect behavioral cues in multimodal feature streams")]
struct Cli {
    /// More log output on stderr; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the detector over a recorded session.
    Detect(DetectArgs),
    /// Score detected cues against ground truth.
    Eval(EvalArgs),
    /// Per-channel-subset recall and rank distance over labeled sessions, as CSV.
    Report(ReportArgs),
    /// Serve sessions to clients over newline-delimited JSON.
    Serve(ServeArgs),
    /// Follow a served session and write its cues and trace.
    Watch(WatchArgs),
    /// Write seeded synthetic sessions with ground truth.
    Synth(SynthArgs),
}

#[derive(clap::Args, Debug)]
struct DetectArgs {
    /// Session file (newline-delimited JSON).
    #[arg(long)]
    input: PathBuf,
    /// Cue events as a JSON array; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Outlierness per batch as `time,outlierness` CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Metric {
    Recall,
    Kendall,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    detected: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Seconds within which two cues count as the same.
    #[arg(long, default_value_t = 30.0)]
    tolerance: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "recall,kendall")]
    metrics: Vec<Metric>,
}

#[derive(clap::Args, Debug)]
struct ReportArgs {
    /// A session file; its truth is read from `<name>.truth.json` beside it.
    #[arg(long = "session")]
    sessions: Vec<PathBuf>,
    /// A directory of `*.jsonl` sessions with truth files.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// `all`, or subsets separated by `;`, e.g. `posture,gaze;gaze`.
    #[arg(long, default_value = "all")]
    subsets: String,
    #[arg(long, default_value_t = 30.0)]
    tolerance: f64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(clap::Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    /// Replay this session file to every new session.
    #[arg(long, conflicts_with = "live")]
    replay: Option<PathBuf>,
    /// Accept frames from clients.
    #[arg(long)]
    live: bool,
    /// realtime, x<factor> or fast.
    #[arg(long, default_value = "realtime")]
    clock: String,
    /// Frames queued per session before ingest is refused.
    #[arg(long, default_value_t = 1024)]
    ingest_capacity: usize,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(clap::Args, Debug)]
struct WatchArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    connect: String,
    #[arg(long, default_value = "session")]
    session: String,
    /// Cue events as a JSON array; stdout when omitted.
    #[arg(long)]
    cues: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Session i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1200.0)]
    duration: f64,
    /// Samples per second.
    #[arg(long, default_value_t = 2.0)]
    sample_rate: f64,
    /// Change-point times in seconds; repeat or separate with commas.
    #[arg(long, value_delimiter = ',', default_value = "600")]
    change_at: Vec<f64>,
    /// Ranking weight per change, in the order of --change-at (default 1).
    #[arg(long, value_delimiter = ',')]
    salience: Vec<f64>,
    /// Mean shift per change in standard deviations.
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    shift_sigmas: f64,
    /// Recorded channels.
    #[arg(long, default_value = "posture,gaze")]
    channels: ChannelSchema,
    /// Channels that shift at each change; all recorded ones by default.
    #[arg(long)]
    change_channels: Option<ChannelSchema>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();
    let result = match &cli.command {
        Command::Detect(a) => commands::detect(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
        Command::Serve(a) => commands::serve(a),
        Command::Watch(a) => commands::watch(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
