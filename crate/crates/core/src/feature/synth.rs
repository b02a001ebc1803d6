//! Seeded synthetic sessions with known change points.
//!
//! A scenario is a run of contiguous segments, each an independent Gaussian
//! per feature dimension. The face channel's Gaussian is over logits and is
//! pushed through a softmax so that emitted frames stay valid probability
//! vectors. Every boundary between segments is a ground-truth cue, ranked by
//! the salience of the segment it opens.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Channel, ChannelSchema, FeatureError, FeatureFrame};
use crate::eval::RankedCueList;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Ranking weight of the change that opens this segment.
    #[serde(default)]
    pub salience: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: ChannelSchema,
    /// Samples per second.
    pub sample_rate: f64,
    pub segments: Vec<Segment>,
}

/// A step change applied on top of the baseline from `at` onwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    pub at: f64,
    /// Shift of every affected dimension, in units of its standard deviation.
    pub shift_sigmas: f64,
    /// Channels that move; intersected with the scenario schema.
    pub channels: ChannelSchema,
    pub salience: f64,
}

/// Nominal seated-person keypoints in a 640x480 camera frame: five head
/// points (nose, eyes, ears) then seven body points (neck, shoulders,
/// elbows, wrists).
const POSTURE_LAYOUT: [(f64, f64); 12] = [
    (320.0, 150.0),
    (305.0, 138.0),
    (335.0, 138.0),
    (290.0, 145.0),
    (350.0, 145.0),
    (320.0, 215.0),
    (270.0, 220.0),
    (370.0, 220.0),
    (250.0, 300.0),
    (390.0, 300.0),
    (280.0, 360.0),
    (360.0, 360.0),
];
const POSTURE_STD: f64 = 4.0;
const GAZE_MEAN: [f64; 2] = [960.0, 540.0];
const GAZE_STD: f64 = 25.0;
const FACE_LOGITS: [f64; 8] = [2.0, 0.5, 0.0, 0.0, -0.5, 0.0, 0.3, -1.0];
const FACE_LOGIT_STD: f64 = 0.3;

/// Per-dimension baseline mean and standard deviation for `schema`.
pub fn baseline(schema: &ChannelSchema) -> (Vec<f64>, Vec<f64>) {
    let mut mean = Vec::with_capacity(schema.dimensions());
    let mut std = Vec::with_capacity(schema.dimensions());
    for c in schema.channels() {
        match c {
            Channel::Posture => {
                for (x, y) in POSTURE_LAYOUT {
                    mean.extend([x, y]);
                }
                std.extend([POSTURE_STD; 24]);
            }
            Channel::Gaze => {
                mean.extend(GAZE_MEAN);
                std.extend([GAZE_STD; 2]);
            }
            Channel::Face => {
                mean.extend(FACE_LOGITS);
                std.extend([FACE_LOGIT_STD; 8]);
            }
        }
    }
    (mean, std)
}

impl Scenario {
    pub fn stationary(schema: ChannelSchema, duration: f64, sample_rate: f64) -> Result<Self, FeatureError> {
        Scenario::with_changes(schema, duration, sample_rate, &[])
    }

    /// Baseline scenario with cumulative step changes.
    pub fn with_changes(
        schema: ChannelSchema,
        duration: f64,
        sample_rate: f64,
        changes: &[ChangeSpec],
    ) -> Result<Self, FeatureError> {
        let (mut mean, std) = baseline(&schema);
        let mut changes = changes.to_vec();
        changes.sort_by(|a, b| a.at.total_cmp(&b.at));
        let mut segments = Vec::with_capacity(changes.len() + 1);
        let mut start = 0.0;
        let mut salience = 0.0;
        for ch in &changes {
            segments.push(Segment {
                start,
                end: ch.at,
                mean: mean.clone(),
                std: std.clone(),
                salience,
            });
            for c in schema.channels().filter(|c| ch.channels.has(*c)) {
                if let Some(range) = schema.range(c) {
                    for d in range {
                        mean[d] += ch.shift_sigmas * std[d];
                    }
                }
            }
            start = ch.at;
            salience = ch.salience;
        }
        segments.push(Segment {
            start,
            end: duration,
            mean,
            std,
            salience,
        });
        let scenario = Scenario {
            schema,
            sample_rate,
            segments,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let err = |m: String| Err(FeatureError::Scenario(m));
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return err(format!("sample rate must be positive, got {}", self.sample_rate));
        }
        if self.segments.is_empty() {
            return err("no segments".into());
        }
        let m = self.schema.dimensions();
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.start >= 0.0 && s.start < s.end && s.end.is_finite()) {
                return err(format!("segment {i} has empty or invalid span [{}, {})", s.start, s.end));
            }
            if s.mean.len() != m || s.std.len() != m {
                return err(format!("segment {i} must have {m} means and deviations"));
            }
            if s.std.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || s.mean.iter().any(|v| !v.is_finite()) {
                return err(format!("segment {i} has invalid parameters"));
            }
            if i > 0 {
                let prev = &self.segments[i - 1];
                if s.start < prev.end {
                    return err(format!("segment {i} overlaps segment {}", i - 1));
                }
                if s.start > prev.end {
                    return err(format!("gap between segments {} and {i}", i - 1));
                }
            }
        }
        Ok(())
    }

    pub fn change_points(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    /// Change timestamps ordered by descending salience, earliest first on
    /// ties.
    pub fn ground_truth(&self) -> RankedCueList {
        let mut cues: Vec<(f64, f64)> = self
            .segments
            .iter()
            .skip(1)
            .map(|s| (s.start, s.salience))
            .collect();
        cues.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
        RankedCueList::new(cues.into_iter().map(|c| c.0).collect())
            .expect("segment starts are distinct and finite")
    }
}

/// Draws a session from `scenario`. Identical seeds give identical frames.
pub fn synthesize_session(
    scenario: &Scenario,
    seed: u64,
) -> Result<(Vec<FeatureFrame>, RankedCueList), FeatureError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = scenario.schema;
    let face = schema.range(Channel::Face);
    let origin = scenario.segments[0].start;
    let end = scenario.segments.last().map(|s| s.end).unwrap_or(origin);
    let mut frames = Vec::new();
    let mut seg = 0;
    for i in 0u64.. {
        let t = origin + i as f64 / scenario.sample_rate;
        if t >= end {
            break;
        }
        while scenario.segments[seg].end <= t {
            seg += 1;
        }
        let s = &scenario.segments[seg];
        let mut values: Vec<f64> = s
            .mean
            .iter()
            .zip(&s.std)
            .map(|(mu, sd)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu + sd * z
            })
            .collect();
        if let Some(r) = face.clone() {
            softmax_in_place(&mut values[r]);
        }
        frames.push(FeatureFrame::new(&schema, t, values)?);
    }
    Ok((frames, scenario.ground_truth()))
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}
