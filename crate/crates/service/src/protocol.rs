//! Wire messages: one JSON object per line,
//! `{"kind": ..., "session": ..., "seq": ..., "payload": ...}`.
//!
//! Clients send `hello`, `frame-ingest`, `threshold-set` and `end`. The
//! server sends `hello`, `trace-point`, `cue`, `threshold-ack`, `error` and
//! `end`. Server `seq` numbers count up per session; client `seq` numbers
//! are echoed back in errors so a client can tell which message failed.

use cuewatch_core::detector::{CueEvent, DetectorConfig, ThresholdCommand, TracePoint};
use cuewatch_core::feature::ChannelSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Hello,
    FrameIngest,
    Cue,
    TracePoint,
    ThresholdSet,
    ThresholdAck,
    Error,
    End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub kind: Kind,
    pub session: String,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl Message {
    pub fn new<P: Serialize>(kind: Kind, session: &str, seq: u64, payload: &P) -> Message {
        Message {
            kind,
            session: session.to_owned(),
            seq,
            payload: serde_json::to_value(payload).expect("protocol payloads serialize"),
        }
    }

    /// The message as one line, newline included.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("protocol messages serialize");
        s.push('\n');
        s
    }

    pub fn payload_as<P: for<'de> Deserialize<'de>>(&self) -> Result<P, serde_json::Error> {
        P::deserialize(&self.payload)
    }
}

/// How the server feeds a session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Replay,
    Live,
}

/// Server reply to a client `hello`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Welcome {
    pub source: SourceKind,
    pub schema: ChannelSchema,
    pub config: DetectorConfig,
    pub threshold: Option<f64>,
    pub next_batch: usize,
}

/// A detected cue. `notify` asks clients to alert the coach.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueNotice {
    pub notify: bool,
    #[serde(flatten)]
    pub cue: CueEvent,
}

/// Wraps a detected cue for publication.
pub fn notify(session: &str, seq: u64, cue: &CueEvent) -> Message {
    Message::new(
        Kind::Cue,
        session,
        seq,
        &CueNotice {
            notify: true,
            cue: cue.clone(),
        },
    )
}

pub type TracePointNotice = TracePoint;

/// Client request to steer the threshold. Retries reuse `id`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub id: String,
    pub command: ThresholdCommand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAck {
    pub id: String,
    pub command: ThresholdCommand,
    pub previous: f64,
    pub threshold: f64,
    /// First batch judged against the new threshold.
    pub applies_from_batch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    Malformed,
    UnexpectedKind,
    NoSession,
    Ordering,
    InvalidFrame,
    Backpressure,
    Lagged,
    ThresholdUnavailable,
    SessionEnded,
    Source,
    Detector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorNotice {
    pub code: ErrorCode,
    pub message: String,
    /// `seq` of the client message that caused the error, if any.
    pub in_reply_to: Option<u64>,
}

/// Summary published when a session stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEnd {
    pub batches: usize,
    pub cues: usize,
}
