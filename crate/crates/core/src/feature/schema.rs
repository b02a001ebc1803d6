use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FeatureError;

/// One sensor modality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// 12 body keypoints (5 head, 7 body) as (x, y) pixel pairs.
    Posture,
    /// Gaze position in screen coordinates.
    Gaze,
    /// Softmax output of an 8-class facial-expression classifier.
    Face,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Posture, Channel::Gaze, Channel::Face];

    pub const fn width(self) -> usize {
        match self {
            Channel::Posture => 24,
            Channel::Gaze => 2,
            Channel::Face => 8,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Channel::Posture => "posture",
            Channel::Gaze => "gaze",
            Channel::Face => "face",
        }
    }

    pub(crate) const fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "posture" => Ok(Channel::Posture),
            "gaze" => Ok(Channel::Gaze),
            "face" => Ok(Channel::Face),
            other => Err(FeatureError::Schema(format!("unknown channel `{other}`"))),
        }
    }
}

/// The set of enabled channels. Frame vectors concatenate the enabled
/// channels in posture, gaze, face order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct ChannelSchema {
    enabled: [bool; 3],
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    #[serde(default)]
    posture: bool,
    #[serde(default)]
    gaze: bool,
    #[serde(default)]
    face: bool,
}

impl TryFrom<RawSchema> for ChannelSchema {
    type Error = FeatureError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        ChannelSchema::new(raw.posture, raw.gaze, raw.face)
    }
}

impl From<ChannelSchema> for RawSchema {
    fn from(schema: ChannelSchema) -> Self {
        RawSchema {
            posture: schema.has(Channel::Posture),
            gaze: schema.has(Channel::Gaze),
            face: schema.has(Channel::Face),
        }
    }
}

impl Default for ChannelSchema {
    /// Posture and gaze; the face channel is opt-in.
    fn default() -> Self {
        ChannelSchema {
            enabled: [true, true, false],
        }
    }
}

impl ChannelSchema {
    pub fn new(posture: bool, gaze: bool, face: bool) -> Result<Self, FeatureError> {
        if !(posture || gaze || face) {
            return Err(FeatureError::Schema(
                "at least one channel must be enabled".into(),
            ));
        }
        Ok(ChannelSchema {
            enabled: [posture, gaze, face],
        })
    }

    pub fn from_channels<I: IntoIterator<Item = Channel>>(channels: I) -> Result<Self, FeatureError> {
        let mut enabled = [false; 3];
        for c in channels {
            enabled[c.slot()] = true;
        }
        ChannelSchema::new(enabled[0], enabled[1], enabled[2])
    }

    pub const fn all() -> Self {
        ChannelSchema {
            enabled: [true, true, true],
        }
    }

    pub fn has(&self, channel: Channel) -> bool {
        self.enabled[channel.slot()]
    }

    pub fn channels(&self) -> impl Iterator<Item = Channel> + '_ {
        Channel::ALL.into_iter().filter(|c| self.has(*c))
    }

    /// Total feature dimension M.
    pub fn dimensions(&self) -> usize {
        self.channels().map(Channel::width).sum()
    }

    /// Position of `channel` inside a frame vector, if enabled.
    pub fn range(&self, channel: Channel) -> Option<Range<usize>> {
        if !self.has(channel) {
            return None;
        }
        let start: usize = self
            .channels()
            .take_while(|c| *c != channel)
            .map(Channel::width)
            .sum();
        Some(start..start + channel.width())
    }

    pub fn is_subset_of(&self, other: &ChannelSchema) -> bool {
        Channel::ALL
            .iter()
            .all(|c| !self.has(*c) || other.has(*c))
    }

    /// Every non-empty subset of this schema's channels, smallest first.
    pub fn subsets(&self) -> Vec<ChannelSchema> {
        let mine: Vec<Channel> = self.channels().collect();
        let mut out = Vec::new();
        for mask in 1u32..(1 << mine.len()) {
            let picked = mine
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| *c);
            if let Ok(s) = ChannelSchema::from_channels(picked) {
                out.push(s);
            }
        }
        out.sort_by_key(|s| (s.channels().count(), s.enabled.map(|b| !b)));
        out
    }
}

impl fmt::Display for ChannelSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.channels().map(Channel::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for ChannelSchema {
    type Err = FeatureError;

    /// Accepts `posture,gaze` or `posture+gaze`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let channels = s
            .split([',', '+'])
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Channel>, _>>()?;
        ChannelSchema::from_channels(channels)
    }
}

/// Per-channel sentinel written into the values of a channel that produced
/// no data for a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingDataPolicy {
    pub posture: f64,
    pub gaze: f64,
    pub face: f64,
}

impl MissingDataPolicy {
    pub const DEFAULT_SENTINEL: f64 = -10_000.0;

    pub fn sentinel(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Posture => self.posture,
            Channel::Gaze => self.gaze,
            Channel::Face => self.face,
        }
    }

    pub fn uniform(value: f64) -> Self {
        MissingDataPolicy {
            posture: value,
            gaze: value,
            face: value,
        }
    }
}

impl Default for MissingDataPolicy {
    fn default() -> Self {
        MissingDataPolicy::uniform(Self::DEFAULT_SENTINEL)
    }
}
