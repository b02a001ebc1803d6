use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cuewatch_core::detector::{read_cues, run_detector, write_cues, CueEvent, OutliernessTrace, TracePoint};
use cuewatch_core::eval::{
    kendall_min_distance, modality_report, read_ground_truth, recall, write_ground_truth, write_report_csv,
    LabeledSession, MatchingConfig, RankedCueList,
};
use cuewatch_core::feature::synth::{synthesize_session, ChangeSpec, Scenario};
use cuewatch_core::feature::{parse_stream, read_recorded, resample_and_batch, write_stream, ChannelSchema};
use cuewatch_service::protocol::{CueNotice, ErrorNotice, SessionEnd};
use cuewatch_service::{Kind, Message, Server, ServerConfig, Source};

use crate::{DetectArgs, EvalArgs, Metric, ReportArgs, ServeArgs, SynthArgs, WatchArgs};

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

/// Writes to `path`, or to stdout when absent.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

pub fn detect(args: &DetectArgs) -> Result<()> {
    let cfg = args.model.detector()?;
    let schema = args.model.channels;
    let frames = parse_stream(open(&args.input)?, schema, &args.model.policy())
        .with_context(|| format!("reading {}", args.input.display()))?;
    let batches = resample_and_batch(frames, schema, &cfg.sampling)?;
    let (cues, trace) = run_detector(&batches, &cfg)?;
    write_cues(output(args.output.as_deref())?, &cues)?;
    if let Some(path) = &args.trace {
        trace.write_csv(create(path)?)?;
    }
    tracing::info!(batches = batches.len(), cues = cues.len(), "detection finished");
    Ok(())
}

/// Detected cues ranked by outlierness, strongest first.
pub fn ranked_cues(cues: &[CueEvent]) -> Result<RankedCueList> {
    Ok(RankedCueList::from_scored(cues.iter().map(|c| (c.batch_time, c.outlierness)))?)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let cues = read_cues(open(&args.detected)?).with_context(|| format!("reading {}", args.detected.display()))?;
    let detected = ranked_cues(&cues)?;
    let truth = read_ground_truth(open(&args.truth)?).with_context(|| format!("reading {}", args.truth.display()))?;
    let matching = MatchingConfig {
        tolerance: args.tolerance,
    };
    let mut result = serde_json::Map::new();
    result.insert("tolerance".into(), args.tolerance.into());
    result.insert("detected".into(), detected.len().into());
    result.insert("truth".into(), truth.len().into());
    for metric in &args.metrics {
        let (name, value) = match metric {
            Metric::Recall => ("recall", recall(&detected, &truth, &matching)?),
            Metric::Kendall => ("kendall_min", kendall_min_distance(&detected, &truth, &matching)?),
        };
        result.insert(name.into(), value.into());
    }
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &result)?;
    writeln!(out)?;
    Ok(())
}

const TRUTH_SUFFIX: &str = ".truth.json";

/// The ground-truth file next to a session: `name.jsonl` pairs with
/// `name.truth.json`.
pub fn truth_path(session: &Path) -> PathBuf {
    let stem = session.file_stem().unwrap_or_default().to_string_lossy();
    session.with_file_name(format!("{stem}{TRUTH_SUFFIX}"))
}

fn suite_sessions(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}

fn parse_subsets(spec: &str, recorded: ChannelSchema) -> Result<Vec<ChannelSchema>> {
    if spec == "all" {
        return Ok(recorded.subsets());
    }
    spec.split(';').map(|s| Ok(s.trim().parse::<ChannelSchema>()?)).collect()
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut paths = args.sessions.clone();
    if let Some(dir) = &args.suite {
        paths.extend(suite_sessions(dir)?);
    }
    if paths.is_empty() {
        bail!("no sessions given; use --session or --suite");
    }
    let policy = args.model.policy();
    let mut sessions = Vec::with_capacity(paths.len());
    for path in &paths {
        let (schema, frames) = read_recorded(open(path)?, &policy).with_context(|| format!("reading {}", path.display()))?;
        let truth_file = truth_path(path);
        let truth = read_ground_truth(open(&truth_file)?).with_context(|| format!("reading {}", truth_file.display()))?;
        sessions.push(LabeledSession { schema, frames, truth });
    }
    let recorded = sessions[0].schema;
    let subsets = parse_subsets(&args.subsets, recorded)?;
    let cfg = args.model.detector()?;
    let matching = MatchingConfig {
        tolerance: args.tolerance,
    };
    let table = modality_report(&sessions, &subsets, &cfg, &matching)?;
    write_report_csv(output(args.output.as_deref())?, &table)?;
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&args.output_dir)
        .with_context(|| format!("cannot create {}", args.output_dir.display()))?;
    let moved = args.change_channels.unwrap_or(args.channels);
    let changes: Vec<ChangeSpec> = args
        .change_at
        .iter()
        .enumerate()
        .map(|(i, &at)| ChangeSpec {
            at,
            shift_sigmas: args.shift_sigmas,
            channels: moved,
            salience: args.salience.get(i).copied().unwrap_or(1.0),
        })
        .collect();
    let scenario = Scenario::with_changes(args.channels, args.duration, args.sample_rate, &changes)?;
    for i in 0..args.count {
        let (frames, truth) = synthesize_session(&scenario, args.seed + i as u64)?;
        let session = args.output_dir.join(format!("session-{i:03}.jsonl"));
        write_stream(create(&session)?, args.channels, &frames)?;
        write_ground_truth(create(&truth_path(&session))?, &truth)?;
    }
    tracing::info!(count = args.count, dir = %args.output_dir.display(), "sessions written");
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let detector = args.model.detector()?;
    let source = match (&args.replay, args.live) {
        (Some(path), false) => Source::Replay(path.clone()),
        (None, true) => Source::Live,
        _ => bail!("choose exactly one of --replay <file> or --live"),
    };
    let mut cfg = ServerConfig::new(detector, args.model.channels, source);
    cfg.policy = args.model.policy();
    cfg.clock = args.clock.parse()?;
    cfg.ingest_capacity = args.ingest_capacity;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let server = Server::bind(args.listen.as_str(), cfg).await?;
        let addr = server.local_addr()?;
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening on {addr}")?;
        out.flush()?;
        drop(out);
        server.run().await?;
        Ok(())
    })
}

/// Joins a session, records everything until it ends, then writes the
/// same files `detect` would.
pub fn watch(args: &WatchArgs) -> Result<()> {
    let stream = std::net::TcpStream::connect(&args.connect).with_context(|| format!("cannot connect to {}", args.connect))?;
    let mut writer = stream.try_clone()?;
    let hello = Message::new(Kind::Hello, &args.session, 1, &());
    writer.write_all(hello.to_line().as_bytes())?;
    let mut cues = Vec::new();
    let mut trace = OutliernessTrace::default();
    let mut failed = None;
    for line in BufReader::new(stream).lines() {
        let msg: Message = serde_json::from_str(&line?)?;
        match msg.kind {
            Kind::Cue => cues.push(msg.payload_as::<CueNotice>()?.cue),
            Kind::TracePoint => trace.push(msg.payload_as::<TracePoint>()?)?,
            Kind::Error => {
                let notice: ErrorNotice = msg.payload_as()?;
                eprintln!("server error ({:?}): {}", notice.code, notice.message);
                failed = Some(notice.message);
            }
            Kind::End => {
                let end: SessionEnd = msg.payload_as()?;
                tracing::info!(batches = end.batches, cues = end.cues, "session ended");
                break;
            }
            _ => {}
        }
    }
    if let Some(message) = failed {
        bail!("session failed: {message}");
    }
    write_cues(output(args.cues.as_deref())?, &cues)?;
    if let Some(path) = &args.trace {
        trace.write_csv(create(path)?)?;
    }
    Ok(())
}
