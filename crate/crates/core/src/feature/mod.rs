//! Multimodal feature frames, the session stream format, batching and
//! synthetic sessions.

mod resample;
mod schema;
mod standardize;
mod stream;
pub mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use resample::{resample_and_batch, Batcher, SamplingConfig};
pub use schema::{Channel, ChannelSchema, MissingDataPolicy};
pub use standardize::Standardizer;
pub use stream::{
    parse_stream, read_recorded, write_stream, RecordDecoder, SessionHeader, SessionReader, SessionWriter,
    FORMAT_VERSION,
};

/// Tolerance on the facial-expression probabilities summing to one.
pub const FACE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {current} does not follow {previous}")]
    Ordering {
        line: usize,
        previous: f64,
        current: f64,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid sampling config: {0}")]
    Config(String),
    #[error("invalid frame: {0}")]
    Frame(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One timestamped observation. `values` holds the enabled channels of the
/// owning schema back to back; a channel flagged invalid carries its sentinel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub timestamp: f64,
    pub values: Vec<f64>,
    validity: [bool; 3],
}

impl FeatureFrame {
    /// Builds a frame with every enabled channel valid.
    pub fn new(schema: &ChannelSchema, timestamp: f64, values: Vec<f64>) -> Result<Self, FeatureError> {
        let mut validity = [false; 3];
        for c in schema.channels() {
            validity[c.slot()] = true;
        }
        let frame = FeatureFrame {
            timestamp,
            values,
            validity,
        };
        frame.validate(schema)?;
        Ok(frame)
    }

    /// Builds a frame from per-channel payloads; `None` marks the channel
    /// missing and fills it with the policy's sentinel.
    pub fn from_channels(
        schema: &ChannelSchema,
        timestamp: f64,
        mut payload: impl FnMut(Channel) -> Option<Vec<f64>>,
        policy: &MissingDataPolicy,
    ) -> Result<Self, FeatureError> {
        let mut values = Vec::with_capacity(schema.dimensions());
        let mut validity = [false; 3];
        for c in schema.channels() {
            match payload(c) {
                Some(v) => {
                    if v.len() != c.width() {
                        return Err(FeatureError::Frame(format!(
                            "{c} expects {} values, got {}",
                            c.width(),
                            v.len()
                        )));
                    }
                    values.extend_from_slice(&v);
                    validity[c.slot()] = true;
                }
                None => values.extend(std::iter::repeat_n(policy.sentinel(c), c.width())),
            }
        }
        let frame = FeatureFrame {
            timestamp,
            values,
            validity,
        };
        frame.validate(schema)?;
        Ok(frame)
    }

    pub fn is_valid(&self, channel: Channel) -> bool {
        self.validity[channel.slot()]
    }

    pub fn channel<'a>(&'a self, schema: &ChannelSchema, channel: Channel) -> Option<&'a [f64]> {
        schema.range(channel).map(|r| &self.values[r])
    }

    pub fn validate(&self, schema: &ChannelSchema) -> Result<(), FeatureError> {
        if !(self.timestamp.is_finite() && self.timestamp >= 0.0) {
            return Err(FeatureError::Frame(format!(
                "timestamp {} must be finite and non-negative",
                self.timestamp
            )));
        }
        if self.values.len() != schema.dimensions() {
            return Err(FeatureError::Frame(format!(
                "expected {} values for schema {schema}, got {}",
                schema.dimensions(),
                self.values.len()
            )));
        }
        if let Some(c) = Channel::ALL
            .into_iter()
            .find(|c| !schema.has(*c) && self.validity[c.slot()])
        {
            return Err(FeatureError::Frame(format!("{c} is valid but not in schema {schema}")));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(FeatureError::Frame(format!("non-finite value {v}")));
        }
        if self.is_valid(Channel::Face) {
            let face = self.channel(schema, Channel::Face).unwrap_or_default();
            if face.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(FeatureError::Frame("face probabilities must lie in [0, 1]".into()));
            }
            let sum: f64 = face.iter().sum();
            if (sum - 1.0).abs() > FACE_SUM_TOLERANCE {
                return Err(FeatureError::Frame(format!(
                    "face probabilities sum to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Restricts the frame to the channels of `to`, which must be a subset
    /// of `from`.
    pub fn project(&self, from: &ChannelSchema, to: &ChannelSchema) -> Result<FeatureFrame, FeatureError> {
        if !to.is_subset_of(from) {
            return Err(FeatureError::Schema(format!("{to} is not a subset of {from}")));
        }
        let mut values = Vec::with_capacity(to.dimensions());
        let mut validity = [false; 3];
        for c in to.channels() {
            values.extend_from_slice(self.channel(from, c).unwrap_or_default());
            validity[c.slot()] = self.is_valid(c);
        }
        Ok(FeatureFrame {
            timestamp: self.timestamp,
            values,
            validity,
        })
    }

    pub(crate) fn held_at(&self, timestamp: f64) -> FeatureFrame {
        FeatureFrame {
            timestamp,
            ..self.clone()
        }
    }
}

impl AsRef<[f64]> for FeatureFrame {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// N consecutive resampled frames forming one detection window.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBatch {
    schema: ChannelSchema,
    frames: Vec<FeatureFrame>,
    start_time: f64,
    end_time: f64,
}

impl FeatureBatch {
    pub fn new(
        schema: ChannelSchema,
        frames: Vec<FeatureFrame>,
        start_time: f64,
        end_time: f64,
    ) -> Result<Self, FeatureError> {
        if frames.is_empty() {
            return Err(FeatureError::Frame("a batch needs at least one frame".into()));
        }
        if start_time.partial_cmp(&end_time) != Some(std::cmp::Ordering::Less) {
            return Err(FeatureError::Frame(format!(
                "batch interval [{start_time}, {end_time}) is empty"
            )));
        }
        for f in &frames {
            f.validate(&schema)?;
            if f.timestamp < start_time || f.timestamp >= end_time {
                return Err(FeatureError::Frame(format!(
                    "frame at {} outside batch [{start_time}, {end_time})",
                    f.timestamp
                )));
            }
        }
        Ok(FeatureBatch {
            schema,
            frames,
            start_time,
            end_time,
        })
    }

    pub fn schema(&self) -> &ChannelSchema {
        &self.schema
    }

    pub fn frames(&self) -> &[FeatureFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub(crate) fn map_frames(&self, f: impl FnMut(&FeatureFrame) -> FeatureFrame) -> FeatureBatch {
        FeatureBatch {
            frames: self.frames.iter().map(f).collect(),
            ..self.clone()
        }
    }
}
