//! Online behavioral-cue detection over multimodal feature streams.
//!
//! The pipeline has four layers:
//!
//! * [`feature`]: the posture/gaze/face channel schema, the newline-delimited
//!   session format, zero-order-hold resampling into fixed-size batches and a
//!   seeded synthetic session generator.
//! * [`sdem`]: a Gaussian mixture updated by sequentially discounting EM.
//!   Each frame is scored by its negative log mixture likelihood and then
//!   folded into the discounted sufficient statistics.
//! * [`detector`]: the batch loop. Scores every batch against the model
//!   fitted so far, gates cue emission with a threshold (fixed, first peak
//!   after warm-up, or offline top-k peaks) and attaches the representative
//!   frames of the previous batch plus the lowest-likelihood frames of the
//!   current one.
//! * [`eval`]: recall with a temporal tolerance and the minimizing Kendall
//!   distance between top-k cue lists.

pub mod detector;
pub mod eval;
pub mod feature;
pub mod sdem;

pub use detector::{CueDetector, CueEvent, DetectorConfig, OutliernessTrace, ThresholdMode};
pub use eval::{MatchingConfig, RankedCueList};
pub use feature::{ChannelSchema, FeatureBatch, FeatureFrame, SamplingConfig};
pub use sdem::{EngineConfig, GmmState};
