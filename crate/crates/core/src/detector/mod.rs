//! The batch loop: score, gate, assemble cues, update.
//!
//! The first batch seeds the mixture. Every later batch is scored against
//! the model fitted so far, may emit a cue, and is then folded into the
//! model. Batches ending inside the warm-up never emit.

mod peaks;
mod threshold;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::{FeatureBatch, FeatureError, SamplingConfig, Standardizer};
use crate::sdem::{EngineConfig, EngineError, GmmState};

pub use peaks::{extract_top_k_peaks, local_maxima, top_k_peak_indices};
pub use threshold::{
    adjust_threshold, auto_initial_threshold, AutoThreshold, ThresholdCommand, ThresholdMode,
    DEFAULT_THRESHOLD_STEP,
};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error("threshold: {0}")]
    Threshold(String),
    #[error("trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub engine: EngineConfig,
    pub sampling: SamplingConfig,
    pub threshold_mode: ThresholdMode,
    /// Lowest-likelihood frames attached to each cue, j.
    pub outlier_count: usize,
    pub threshold_step: f64,
    /// Peaks closer than this to a stronger one are dropped in top-k mode.
    pub nms_window: f64,
    /// z-score features against the first batch before modeling.
    pub standardize: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            engine: EngineConfig::default(),
            sampling: SamplingConfig::default(),
            threshold_mode: ThresholdMode::Auto,
            outlier_count: 2,
            threshold_step: DEFAULT_THRESHOLD_STEP,
            nms_window: 30.0,
            standardize: false,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        self.engine.validate()?;
        self.sampling.validate()?;
        match self.threshold_mode {
            ThresholdMode::Fixed(v) if !v.is_finite() => {
                return Err(DetectorError::Config(format!("fixed threshold must be finite, got {v}")))
            }
            ThresholdMode::TopK(0) => return Err(DetectorError::Config("top-k needs k >= 1".into())),
            _ => {}
        }
        let n = self.sampling.frames_per_batch();
        if self.outlier_count == 0 || self.outlier_count > n {
            return Err(DetectorError::Config(format!(
                "outlier count {} must lie in 1..={n}",
                self.outlier_count
            )));
        }
        if n < self.engine.components {
            return Err(DetectorError::Config(format!(
                "{n} frames per batch cannot seed {} components",
                self.engine.components
            )));
        }
        if !(self.threshold_step > 1.0 && self.threshold_step.is_finite()) {
            return Err(DetectorError::Config(format!(
                "threshold step must exceed 1, got {}",
                self.threshold_step
            )));
        }
        if self.nms_window.is_nan() || self.nms_window < 0.0 {
            return Err(DetectorError::Config("NMS window must be non-negative".into()));
        }
        Ok(())
    }
}

/// A frame attached to a cue, indexed within its batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueFrame {
    pub index: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

/// The frame of the previous batch most typical of one mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeFrame {
    pub component: usize,
    pub index: usize,
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueEvent {
    /// Zero-based position of the batch in the session.
    pub batch_index: usize,
    /// End of the batch, seconds from session start.
    pub batch_time: f64,
    pub outlierness: f64,
    /// Threshold in force when the cue fired; absent for top-k selection.
    pub threshold: Option<f64>,
    /// One frame per component, from the previous batch.
    pub representative: Vec<RepresentativeFrame>,
    /// Lowest-likelihood frames of this batch, most anomalous first.
    pub outliers: Vec<CueFrame>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub batch_index: usize,
    pub time: f64,
    pub outlierness: f64,
}

/// Batch outlierness over a session, strictly increasing in time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutliernessTrace {
    points: Vec<TracePoint>,
}

impl OutliernessTrace {
    pub fn push(&mut self, point: TracePoint) -> Result<(), DetectorError> {
        if let Some(last) = self.points.last() {
            if point.time <= last.time {
                return Err(DetectorError::Trace(format!(
                    "time {} does not follow {}",
                    point.time, last.time
                )));
            }
        }
        self.points.push(point);
        Ok(())
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `time,outlierness` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DetectorError> {
        writeln!(out, "time,outlierness")?;
        for p in &self.points {
            writeln!(out, "{},{}", p.time, p.outlierness)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(source: R) -> Result<Self, DetectorError> {
        let mut trace = OutliernessTrace::default();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64, DetectorError> {
                s.and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| DetectorError::Trace(format!("line {}: bad row `{line}`", i + 1)))
            };
            let mut cols = line.split(',');
            let time = parse(cols.next())?;
            let outlierness = parse(cols.next())?;
            trace.push(TracePoint {
                batch_index: trace.len() + 1,
                time,
                outlierness,
            })?;
        }
        Ok(trace)
    }
}

/// What one batch produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchOutcome {
    pub batch_index: usize,
    /// Absent for the seeding batch.
    pub trace_point: Option<TracePoint>,
    pub cue: Option<CueEvent>,
    /// Set on the batch that confirms the automatic initial threshold.
    pub threshold_confirmed: Option<f64>,
}

struct Previous {
    batch: FeatureBatch,
    representative: Vec<usize>,
}

/// Streaming detector for one session.
pub struct CueDetector {
    cfg: DetectorConfig,
    state: Option<GmmState>,
    standardizer: Option<Standardizer>,
    previous: Option<Previous>,
    threshold: Option<f64>,
    auto: Option<AutoThreshold>,
    batches_seen: usize,
    trace: OutliernessTrace,
    candidates: Vec<CueEvent>,
}

impl CueDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self, DetectorError> {
        cfg.validate()?;
        let (threshold, auto) = match cfg.threshold_mode {
            ThresholdMode::Fixed(v) => (Some(v), None),
            ThresholdMode::Auto => (None, Some(AutoThreshold::new(cfg.sampling.warmup))),
            ThresholdMode::TopK(_) => (None, None),
        };
        Ok(CueDetector {
            cfg,
            state: None,
            standardizer: None,
            previous: None,
            threshold,
            auto,
            batches_seen: 0,
            trace: OutliernessTrace::default(),
            candidates: Vec::new(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Threshold in force, `None` while pending or in top-k mode.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// Index the next processed batch will carry.
    pub fn next_batch_index(&self) -> usize {
        self.batches_seen
    }

    pub fn state(&self) -> Option<&GmmState> {
        self.state.as_ref()
    }

    pub fn trace(&self) -> &OutliernessTrace {
        &self.trace
    }

    /// Steps the threshold; takes effect from the next batch.
    pub fn apply_command(&mut self, command: ThresholdCommand) -> Result<f64, DetectorError> {
        let current = self.threshold.ok_or_else(|| {
            DetectorError::Threshold(match self.cfg.threshold_mode {
                ThresholdMode::TopK(_) => "top-k mode has no adjustable threshold".into(),
                _ => "initial threshold still pending".into(),
            })
        })?;
        let next = adjust_threshold(current, command, self.cfg.threshold_step)?;
        self.threshold = Some(next);
        Ok(next)
    }

    pub fn set_threshold(&mut self, value: f64) -> Result<(), DetectorError> {
        if matches!(self.cfg.threshold_mode, ThresholdMode::TopK(_)) {
            return Err(DetectorError::Threshold("top-k mode has no adjustable threshold".into()));
        }
        if !value.is_finite() {
            return Err(DetectorError::Threshold(format!("threshold must be finite, got {value}")));
        }
        self.threshold = Some(value);
        if let Some(auto) = &mut self.auto {
            // A manual value ends the wait for the first peak.
            if auto.value().is_none() {
                *auto = AutoThreshold::new(f64::INFINITY);
            }
        }
        Ok(())
    }

    pub fn process(&mut self, batch: &FeatureBatch) -> Result<BatchOutcome, DetectorError> {
        let batch_index = self.batches_seen;
        if self.state.is_none() && self.cfg.standardize {
            self.standardizer = Some(Standardizer::fit(batch));
        }
        let model_batch = match &self.standardizer {
            Some(z) => z.apply_batch(batch),
            None => batch.clone(),
        };
        let rows = model_batch.frames();

        let Some(state) = self.state.as_mut() else {
            let mut state = GmmState::initialize(rows, self.cfg.engine)?;
            let representative = state.representative_frames(rows)?;
            state.update_batch(rows)?;
            self.state = Some(state);
            self.previous = Some(Previous {
                batch: batch.clone(),
                representative,
            });
            self.batches_seen += 1;
            return Ok(BatchOutcome {
                batch_index,
                ..BatchOutcome::default()
            });
        };

        let outlierness = state.score_batch(rows)?;
        let point = TracePoint {
            batch_index,
            time: batch.end_time(),
            outlierness,
        };
        self.trace.push(point)?;

        let after_warmup = point.time > self.cfg.sampling.warmup;
        let fire = match self.cfg.threshold_mode {
            ThresholdMode::TopK(_) => after_warmup,
            _ => after_warmup && self.threshold.is_some_and(|th| outlierness > th),
        };
        let mut cue = None;
        if fire {
            let previous = self.previous.as_ref().expect("seeded before scoring");
            let event = CueEvent {
                batch_index,
                batch_time: point.time,
                outlierness,
                threshold: match self.cfg.threshold_mode {
                    ThresholdMode::TopK(_) => None,
                    _ => self.threshold,
                },
                representative: previous
                    .representative
                    .iter()
                    .enumerate()
                    .map(|(component, &index)| {
                        let f = &previous.batch.frames()[index];
                        RepresentativeFrame {
                            component,
                            index,
                            t: f.timestamp,
                            values: f.values.clone(),
                        }
                    })
                    .collect(),
                outliers: state
                    .outlier_frames(rows, self.cfg.outlier_count)?
                    .into_iter()
                    .map(|index| {
                        let f = &batch.frames()[index];
                        CueFrame {
                            index,
                            t: f.timestamp,
                            values: f.values.clone(),
                        }
                    })
                    .collect(),
            };
            match self.cfg.threshold_mode {
                ThresholdMode::TopK(_) => self.candidates.push(event),
                _ => cue = Some(event),
            }
        }

        let threshold_confirmed = self.auto.as_mut().and_then(|auto| auto.observe(point));
        if threshold_confirmed.is_some() {
            self.threshold = threshold_confirmed;
        }

        let representative = state.representative_frames(rows)?;
        state.update_batch(rows)?;
        self.previous = Some(Previous {
            batch: batch.clone(),
            representative,
        });
        self.batches_seen += 1;
        Ok(BatchOutcome {
            batch_index,
            trace_point: Some(point),
            cue,
            threshold_confirmed,
        })
    }

    /// Ends the session. In top-k mode returns the cues at the k strongest
    /// peaks in time order; otherwise nothing.
    pub fn finish(&mut self) -> Result<Vec<CueEvent>, DetectorError> {
        let ThresholdMode::TopK(k) = self.cfg.threshold_mode else {
            return Ok(Vec::new());
        };
        let picks = top_k_peak_indices(&self.trace, k, self.cfg.sampling.warmup, self.cfg.nms_window)?;
        let mut chosen: Vec<usize> = picks.iter().map(|&i| self.trace.points()[i].batch_index).collect();
        chosen.sort_unstable();
        let events = std::mem::take(&mut self.candidates);
        Ok(events
            .into_iter()
            .filter(|e| chosen.binary_search(&e.batch_index).is_ok())
            .collect())
    }
}

/// Runs a whole session. Fewer than two batches yield nothing.
pub fn run_detector(
    batches: &[FeatureBatch],
    cfg: &DetectorConfig,
) -> Result<(Vec<CueEvent>, OutliernessTrace), DetectorError> {
    let mut detector = CueDetector::new(*cfg)?;
    if batches.len() < 2 {
        return Ok((Vec::new(), OutliernessTrace::default()));
    }
    let mut cues = Vec::new();
    for b in batches {
        cues.extend(detector.process(b)?.cue);
    }
    cues.extend(detector.finish()?);
    Ok((cues, detector.trace))
}

/// Reads cue events written as a JSON array.
pub fn read_cues<R: std::io::Read>(source: R) -> Result<Vec<CueEvent>, DetectorError> {
    serde_json::from_reader(source).map_err(|e| DetectorError::Io(e.into()))
}

pub fn write_cues<W: Write>(mut out: W, cues: &[CueEvent]) -> Result<(), DetectorError> {
    serde_json::to_writer_pretty(&mut out, cues).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
