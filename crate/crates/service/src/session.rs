//! One detector per session, driven by a single task.

use std::collections::HashMap;

use cuewatch_core::detector::{CueDetector, DetectorError};
use cuewatch_core::feature::{Batcher, FeatureBatch, FeatureError, FeatureFrame, RecordDecoder};
use serde_json::Value;
use tokio::sync::{broadcast, mpsc};

use crate::protocol::{
    notify, ErrorCode, ErrorNotice, Kind, Message, SessionEnd, SourceKind, ThresholdAck, ThresholdSet, Welcome,
};
use crate::ServerConfig;

/// Direct replies to the client that sent a request.
pub(crate) type Reply = mpsc::UnboundedSender<Message>;

pub(crate) enum SessionInput {
    Hello { reply: Reply },
    Frame { payload: Value, seq: u64, reply: Reply },
    Threshold { set: ThresholdSet, seq: u64, reply: Reply },
    End { seq: u64, reply: Reply },
}

pub(crate) struct Session {
    id: String,
    source: SourceKind,
    cfg: ServerConfig,
    detector: CueDetector,
    batcher: Option<Batcher>,
    decoder: RecordDecoder,
    events: broadcast::Sender<Message>,
    seq: u64,
    acks: HashMap<String, ThresholdAck>,
    batches: usize,
    cues: usize,
    ended: bool,
}

impl Session {
    pub(crate) fn new(
        id: String,
        source: SourceKind,
        cfg: ServerConfig,
        events: broadcast::Sender<Message>,
    ) -> Result<Session, crate::ServiceError> {
        Ok(Session {
            detector: CueDetector::new(cfg.detector)?,
            batcher: Some(Batcher::new(cfg.schema, cfg.detector.sampling)?),
            decoder: RecordDecoder::new(cfg.schema, cfg.schema, cfg.policy)?,
            id,
            source,
            cfg,
            events,
            seq: 0,
            acks: HashMap::new(),
            batches: 0,
            cues: 0,
            ended: false,
        })
    }

    pub(crate) fn config(&self) -> &ServerConfig {
        &self.cfg
    }

    pub(crate) fn ended(&self) -> bool {
        self.ended
    }

    fn message<P: serde::Serialize>(&mut self, kind: Kind, payload: &P) -> Message {
        self.seq += 1;
        Message::new(kind, &self.id, self.seq, payload)
    }

    fn publish(&mut self, msg: Message) {
        // Having no subscribers is not an error: the session keeps running.
        let _ = self.events.send(msg);
    }

    fn reply<P: serde::Serialize>(&mut self, reply: &Reply, kind: Kind, payload: &P) {
        let msg = self.message(kind, payload);
        let _ = reply.send(msg);
    }

    fn reply_error(&mut self, reply: &Reply, code: ErrorCode, message: String, seq: Option<u64>) {
        self.reply(
            reply,
            Kind::Error,
            &ErrorNotice {
                code,
                message,
                in_reply_to: seq,
            },
        );
    }

    /// Handles one client request. Frames from a replayed session are
    /// refused.
    pub(crate) fn handle(&mut self, input: SessionInput) {
        match input {
            SessionInput::Hello { reply } => {
                let welcome = Welcome {
                    source: self.source,
                    schema: self.cfg.schema,
                    config: self.cfg.detector,
                    threshold: self.detector.threshold(),
                    next_batch: self.detector.next_batch_index(),
                };
                self.reply(&reply, Kind::Hello, &welcome);
            }
            SessionInput::Frame { payload, seq, reply } => {
                if self.source == SourceKind::Replay {
                    let msg = "this session replays a file and takes no frames".to_owned();
                    self.reply_error(&reply, ErrorCode::UnexpectedKind, msg, Some(seq));
                    return;
                }
                if self.ended {
                    self.reply_error(&reply, ErrorCode::SessionEnded, "session has ended".into(), Some(seq));
                    return;
                }
                match self.decoder.decode_value(payload, seq as usize) {
                    Ok(frame) => self.ingest(frame),
                    Err(e) => {
                        let code = match e {
                            FeatureError::Ordering { .. } => ErrorCode::Ordering,
                            _ => ErrorCode::InvalidFrame,
                        };
                        self.reply_error(&reply, code, format!("frame seq {seq}: {e}"), Some(seq));
                    }
                }
            }
            SessionInput::Threshold { set, seq, reply } => self.steer(set, seq, &reply),
            SessionInput::End { seq, reply } => {
                if self.source == SourceKind::Replay {
                    let msg = "a replayed session ends with its file".to_owned();
                    self.reply_error(&reply, ErrorCode::UnexpectedKind, msg, Some(seq));
                } else {
                    self.finish();
                }
            }
        }
    }

    /// The command takes effect from the next batch, since batches are
    /// processed by this same task and none is in flight here.
    fn steer(&mut self, set: ThresholdSet, seq: u64, reply: &Reply) {
        if let Some(ack) = self.acks.get(&set.id).cloned() {
            self.reply(reply, Kind::ThresholdAck, &ack);
            return;
        }
        let previous = self.detector.threshold();
        match self.detector.apply_command(set.command) {
            Ok(threshold) => {
                let ack = ThresholdAck {
                    id: set.id.clone(),
                    command: set.command,
                    previous: previous.expect("a command only applies to an active threshold"),
                    threshold,
                    applies_from_batch: self.detector.next_batch_index(),
                };
                self.acks.insert(set.id, ack.clone());
                let msg = self.message(Kind::ThresholdAck, &ack);
                self.publish(msg);
            }
            Err(e) => self.reply_error(reply, ErrorCode::ThresholdUnavailable, e.to_string(), Some(seq)),
        }
    }

    /// Feeds one frame; closed batches are processed immediately.
    pub(crate) fn ingest(&mut self, frame: FeatureFrame) {
        let Some(batcher) = self.batcher.as_mut() else { return };
        match batcher.push(frame) {
            Ok(batches) => {
                for b in batches {
                    self.process(&b);
                }
            }
            Err(e) => self.fail(ErrorCode::InvalidFrame, e.to_string()),
        }
    }

    fn process(&mut self, batch: &FeatureBatch) {
        if self.ended {
            return;
        }
        let outcome = match self.detector.process(batch) {
            Ok(o) => o,
            Err(e) => return self.fail(ErrorCode::Detector, e.to_string()),
        };
        self.batches += 1;
        if let Some(point) = outcome.trace_point {
            let msg = self.message(Kind::TracePoint, &point);
            self.publish(msg);
        }
        if let Some(cue) = outcome.cue {
            self.cues += 1;
            self.seq += 1;
            let msg = notify(&self.id, self.seq, &cue);
            self.publish(msg);
        }
    }

    /// Flushes the last batch, publishes top-k selections and the summary.
    pub(crate) fn finish(&mut self) {
        if self.ended {
            return;
        }
        if let Some(batcher) = self.batcher.take() {
            match batcher.finish() {
                Ok(batches) => {
                    for b in batches {
                        self.process(&b);
                    }
                }
                Err(e) => return self.fail(ErrorCode::InvalidFrame, e.to_string()),
            }
        }
        if self.ended {
            return;
        }
        let selected = if self.batches < 2 {
            Ok(Vec::new())
        } else {
            self.detector.finish()
        };
        match selected {
            Ok(cues) => {
                for cue in cues {
                    self.cues += 1;
                    self.seq += 1;
                    let msg = notify(&self.id, self.seq, &cue);
                    self.publish(msg);
                }
            }
            Err(e) => return self.fail(ErrorCode::Detector, e.to_string()),
        }
        self.ended = true;
        let end = SessionEnd {
            batches: self.batches,
            cues: self.cues,
        };
        let msg = self.message(Kind::End, &end);
        self.publish(msg);
    }

    /// Publishes a fatal error and stops the session.
    pub(crate) fn fail(&mut self, code: ErrorCode, message: String) {
        let notice = ErrorNotice {
            code,
            message,
            in_reply_to: None,
        };
        let msg = self.message(Kind::Error, &notice);
        self.publish(msg);
        self.ended = true;
        let end = SessionEnd {
            batches: self.batches,
            cues: self.cues,
        };
        let msg = self.message(Kind::End, &end);
        self.publish(msg);
    }
}

impl From<DetectorError> for crate::ServiceError {
    fn from(e: DetectorError) -> Self {
        crate::ServiceError::Config(e.to_string())
    }
}

impl From<FeatureError> for crate::ServiceError {
    fn from(e: FeatureError) -> Self {
        crate::ServiceError::Config(e.to_string())
    }
}
