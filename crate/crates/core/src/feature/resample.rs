use serde::{Deserialize, Serialize};

use super::{ChannelSchema, FeatureBatch, FeatureError, FeatureFrame};

/// Sampling cadence, batch length and warm-up, all in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub sample_period: f64,
    pub batch_duration: f64,
    pub warmup: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            sample_period: 0.5,
            batch_duration: 30.0,
            warmup: 180.0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(FeatureError::Config(format!(
                "sample period must be positive, got {}",
                self.sample_period
            )));
        }
        if !(self.batch_duration >= self.sample_period && self.batch_duration.is_finite()) {
            return Err(FeatureError::Config(format!(
                "batch duration {} is shorter than the sample period {}",
                self.batch_duration, self.sample_period
            )));
        }
        if self.warmup.is_nan() || self.warmup < 0.0 {
            return Err(FeatureError::Config(format!(
                "warm-up must be non-negative, got {}",
                self.warmup
            )));
        }
        let ratio = self.batch_duration / self.sample_period;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(FeatureError::Config(format!(
                "batch duration {} is not a whole number of {} s samples",
                self.batch_duration, self.sample_period
            )));
        }
        Ok(())
    }

    /// Frames per batch, N.
    pub fn frames_per_batch(&self) -> usize {
        (self.batch_duration / self.sample_period).round() as usize
    }
}

/// Incremental zero-order-hold resampler.
///
/// Sample ticks sit at `k * sample_period` seconds from the session origin.
/// Each tick takes the latest input frame at or before it; ticks before the
/// first input frame are skipped. Every `N` consecutive ticks close a batch.
#[derive(Debug)]
pub struct Batcher {
    schema: ChannelSchema,
    cfg: SamplingConfig,
    per_batch: usize,
    next_tick: Option<u64>,
    held: Option<FeatureFrame>,
    pending: Vec<FeatureFrame>,
    pending_start: f64,
}

impl Batcher {
    pub fn new(schema: ChannelSchema, cfg: SamplingConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        Ok(Batcher {
            schema,
            per_batch: cfg.frames_per_batch(),
            cfg,
            next_tick: None,
            held: None,
            pending: Vec::new(),
            pending_start: 0.0,
        })
    }

    fn tick_time(&self, k: u64) -> f64 {
        k as f64 * self.cfg.sample_period
    }

    /// Feeds one input frame and returns any batches it completes.
    pub fn push(&mut self, frame: FeatureFrame) -> Result<Vec<FeatureBatch>, FeatureError> {
        frame.validate(&self.schema)?;
        if let Some(prev) = &self.held {
            if frame.timestamp <= prev.timestamp {
                return Err(FeatureError::Ordering {
                    line: 0,
                    previous: prev.timestamp,
                    current: frame.timestamp,
                });
            }
        }
        let mut out = Vec::new();
        let mut k = match self.next_tick {
            Some(k) => k,
            None => (frame.timestamp / self.cfg.sample_period).ceil() as u64,
        };
        if let Some(held) = self.held.take() {
            while self.tick_time(k) < frame.timestamp {
                let t = self.tick_time(k);
                self.emit(held.held_at(t), &mut out)?;
                k += 1;
            }
        }
        self.next_tick = Some(k);
        self.held = Some(frame);
        Ok(out)
    }

    /// Flushes ticks up to the last input frame. A trailing partial batch is
    /// dropped.
    pub fn finish(mut self) -> Result<Vec<FeatureBatch>, FeatureError> {
        let mut out = Vec::new();
        if let (Some(held), Some(mut k)) = (self.held.take(), self.next_tick) {
            while self.tick_time(k) <= held.timestamp {
                let t = self.tick_time(k);
                self.emit(held.held_at(t), &mut out)?;
                k += 1;
            }
        }
        Ok(out)
    }

    fn emit(&mut self, frame: FeatureFrame, out: &mut Vec<FeatureBatch>) -> Result<(), FeatureError> {
        if self.pending.is_empty() {
            self.pending_start = frame.timestamp;
        }
        self.pending.push(frame);
        if self.pending.len() == self.per_batch {
            let frames = std::mem::take(&mut self.pending);
            let start = self.pending_start;
            out.push(FeatureBatch::new(
                self.schema,
                frames,
                start,
                start + self.cfg.batch_duration,
            )?);
        }
        Ok(())
    }
}

/// Resamples a timestamp-ordered frame sequence onto the sampling grid and
/// cuts it into batches of exactly N frames.
pub fn resample_and_batch<I>(
    frames: I,
    schema: ChannelSchema,
    cfg: &SamplingConfig,
) -> Result<Vec<FeatureBatch>, FeatureError>
where
    I: IntoIterator<Item = FeatureFrame>,
{
    let mut batcher = Batcher::new(schema, *cfg)?;
    let mut out = Vec::new();
    for f in frames {
        out.extend(batcher.push(f)?);
    }
    out.extend(batcher.finish()?);
    Ok(out)
}
