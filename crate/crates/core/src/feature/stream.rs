//! Newline-delimited JSON session files.
//!
//! ```text
//! {"schema": {"posture": true, "gaze": true, "face": false}, "version": 1}
//! {"t": 0.0, "posture": [24 numbers], "gaze": [2 numbers], "face": null}
//! {"t": 0.5, "posture": [...], "gaze": null}
//! ```
//!
//! The first line fixes the recorded channel set. A `null` (or absent)
//! channel is missing for that sample.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Channel, ChannelSchema, FeatureError, FeatureFrame, MissingDataPolicy};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub schema: ChannelSchema,
    pub version: u32,
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    posture: Option<Payload<'a>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gaze: Option<Payload<'a>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    face: Option<Payload<'a>>,
}

/// `Some(None)` serializes as an explicit `null`.
type Payload<'a> = Option<std::borrow::Cow<'a, [f64]>>;

/// Turns individual records into frames, enforcing the recorded channel
/// set and strictly increasing timestamps across calls.
#[derive(Clone, Debug)]
pub struct RecordDecoder {
    recorded: ChannelSchema,
    schema: ChannelSchema,
    policy: MissingDataPolicy,
    last_t: Option<f64>,
}

impl RecordDecoder {
    /// `schema` selects the channels to keep and must be a subset of
    /// `recorded`, the channels the source declares.
    pub fn new(recorded: ChannelSchema, schema: ChannelSchema, policy: MissingDataPolicy) -> Result<Self, FeatureError> {
        if !schema.is_subset_of(&recorded) {
            return Err(FeatureError::Schema(format!(
                "requested channels {schema} are not all recorded (source has {recorded})"
            )));
        }
        Ok(RecordDecoder {
            recorded,
            schema,
            policy,
            last_t: None,
        })
    }

    pub fn schema(&self) -> &ChannelSchema {
        &self.schema
    }

    /// Decodes one JSON record. `line` is used in error messages only.
    pub fn decode_str(&mut self, text: &str, line: usize) -> Result<FeatureFrame, FeatureError> {
        let record: Record = serde_json::from_str(text).map_err(|e| FeatureError::Parse {
            line,
            message: e.to_string(),
        })?;
        self.accept(&record, line)
    }

    pub fn decode_value(&mut self, value: serde_json::Value, line: usize) -> Result<FeatureFrame, FeatureError> {
        let record: Record = serde_json::from_value(value).map_err(|e| FeatureError::Parse {
            line,
            message: e.to_string(),
        })?;
        self.accept(&record, line)
    }

    fn accept(&mut self, record: &Record, line: usize) -> Result<FeatureFrame, FeatureError> {
        for c in Channel::ALL {
            if !self.recorded.has(c) && record.payload(c).is_some() {
                return Err(FeatureError::Parse {
                    line,
                    message: format!("channel {c} is not declared in the header"),
                });
            }
        }
        let frame = FeatureFrame::from_channels(
            &self.schema,
            record.t,
            |c| record.payload(c).map(|v| v.to_vec()),
            &self.policy,
        )
        .map_err(|e| FeatureError::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some(prev) = self.last_t {
            if frame.timestamp <= prev {
                return Err(FeatureError::Ordering {
                    line,
                    previous: prev,
                    current: frame.timestamp,
                });
            }
        }
        self.last_t = Some(frame.timestamp);
        Ok(frame)
    }
}

/// Streaming reader over a session file. Yields frames restricted to the
/// requested schema, which must be a subset of the recorded one.
pub struct SessionReader<R> {
    lines: std::io::Lines<R>,
    header: SessionHeader,
    decoder: RecordDecoder,
    line: usize,
    failed: bool,
}

impl<R: BufRead> SessionReader<R> {
    pub fn new(source: R, schema: ChannelSchema, policy: MissingDataPolicy) -> Result<Self, FeatureError> {
        Self::open(source, Some(schema), policy)
    }

    /// Reads every channel the header declares.
    pub fn recorded(source: R, policy: MissingDataPolicy) -> Result<Self, FeatureError> {
        Self::open(source, None, policy)
    }

    fn open(source: R, schema: Option<ChannelSchema>, policy: MissingDataPolicy) -> Result<Self, FeatureError> {
        let mut lines = source.lines();
        let mut line = 0;
        let header = loop {
            line += 1;
            let Some(text) = lines.next().transpose()? else {
                return Err(FeatureError::Parse {
                    line,
                    message: "missing session header".into(),
                });
            };
            if text.trim().is_empty() {
                continue;
            }
            let header: SessionHeader = serde_json::from_str(&text).map_err(|e| FeatureError::Parse {
                line,
                message: format!("bad session header: {e}"),
            })?;
            break header;
        };
        if header.version != FORMAT_VERSION {
            return Err(FeatureError::Parse {
                line,
                message: format!("unsupported format version {}", header.version),
            });
        }
        Ok(SessionReader {
            lines,
            header,
            decoder: RecordDecoder::new(header.schema, schema.unwrap_or(header.schema), policy)?,
            line,
            failed: false,
        })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn schema(&self) -> &ChannelSchema {
        self.decoder.schema()
    }
}

impl Record<'_> {
    fn payload(&self, channel: Channel) -> Option<&[f64]> {
        let slot = match channel {
            Channel::Posture => &self.posture,
            Channel::Gaze => &self.gaze,
            Channel::Face => &self.face,
        };
        slot.as_ref().and_then(|p| p.as_deref())
    }
}

impl<R: BufRead> Iterator for SessionReader<R> {
    type Item = Result<FeatureFrame, FeatureError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.line += 1;
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            let out = self.decoder.decode_str(&text, self.line);
            self.failed = out.is_err();
            return Some(out);
        }
    }
}

/// Reads a whole session with all recorded channels.
pub fn read_recorded<R: BufRead>(
    source: R,
    policy: &MissingDataPolicy,
) -> Result<(ChannelSchema, Vec<FeatureFrame>), FeatureError> {
    let reader = SessionReader::recorded(source, *policy)?;
    let schema = *reader.schema();
    Ok((schema, reader.collect::<Result<_, _>>()?))
}

/// Reads a whole session, stopping at the first malformed or out-of-order
/// record.
pub fn parse_stream<R: BufRead>(
    source: R,
    schema: ChannelSchema,
    policy: &MissingDataPolicy,
) -> Result<Vec<FeatureFrame>, FeatureError> {
    SessionReader::new(source, schema, *policy)?.collect()
}

pub struct SessionWriter<W: Write> {
    out: W,
    schema: ChannelSchema,
    last_t: Option<f64>,
}

impl<W: Write> SessionWriter<W> {
    pub fn new(mut out: W, schema: ChannelSchema) -> Result<Self, FeatureError> {
        let header = SessionHeader {
            schema,
            version: FORMAT_VERSION,
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(SessionWriter {
            out,
            schema,
            last_t: None,
        })
    }

    pub fn write_frame(&mut self, frame: &FeatureFrame) -> Result<(), FeatureError> {
        frame.validate(&self.schema)?;
        if let Some(prev) = self.last_t {
            if frame.timestamp <= prev {
                return Err(FeatureError::Frame(format!(
                    "timestamp {} does not follow {prev}",
                    frame.timestamp
                )));
            }
        }
        let slot = |c: Channel| -> Option<Payload<'_>> {
            self.schema.has(c).then(|| {
                frame
                    .is_valid(c)
                    .then(|| frame.channel(&self.schema, c).map(std::borrow::Cow::Borrowed))
                    .flatten()
            })
        };
        let record = Record {
            t: frame.timestamp,
            posture: slot(Channel::Posture),
            gaze: slot(Channel::Gaze),
            face: slot(Channel::Face),
        };
        serde_json::to_writer(&mut self.out, &record).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.last_t = Some(frame.timestamp);
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_stream<'a, W: Write>(
    out: W,
    schema: ChannelSchema,
    frames: impl IntoIterator<Item = &'a FeatureFrame>,
) -> Result<W, FeatureError> {
    let mut writer = SessionWriter::new(out, schema)?;
    for f in frames {
        writer.write_frame(f)?;
    }
    let mut out = writer.into_inner();
    out.flush()?;
    Ok(out)
}
