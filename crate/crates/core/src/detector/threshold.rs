use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DetectorError, OutliernessTrace, TracePoint};

/// Multiplicative step applied per threshold command.
pub const DEFAULT_THRESHOLD_STEP: f64 = 1.10;

/// How the emission threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ThresholdMode {
    Fixed(f64),
    /// The outlierness of the first confirmed peak after warm-up.
    Auto,
    /// Offline: the k most significant peaks of the whole trace.
    TopK(usize),
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdMode::Fixed(v) => write!(f, "fixed:{v}"),
            ThresholdMode::Auto => f.write_str("auto"),
            ThresholdMode::TopK(k) => write!(f, "topk:{k}"),
        }
    }
}

impl FromStr for ThresholdMode {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DetectorError::Config(format!("threshold must be auto, fixed:<v> or topk:<k>, got `{s}`"));
        let s = s.trim();
        if s == "auto" {
            return Ok(ThresholdMode::Auto);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "fixed" => Ok(ThresholdMode::Fixed(arg.parse().map_err(|_| bad())?)),
            "topk" => Ok(ThresholdMode::TopK(arg.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for ThresholdMode {
    type Error = DetectorError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ThresholdMode> for String {
    fn from(m: ThresholdMode) -> Self {
        m.to_string()
    }
}

/// Coach steering: `More` asks for more cues, `Less` for fewer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdCommand {
    More,
    Less,
}

/// `More` divides the threshold by `step`, `Less` multiplies it.
pub fn adjust_threshold(current: f64, command: ThresholdCommand, step: f64) -> Result<f64, DetectorError> {
    if !(current > 0.0 && current.is_finite()) {
        return Err(DetectorError::Threshold(format!(
            "threshold must be positive to adjust, got {current}"
        )));
    }
    if !(step > 1.0 && step.is_finite()) {
        return Err(DetectorError::Threshold(format!("step must exceed 1, got {step}")));
    }
    Ok(match command {
        ThresholdCommand::More => current / step,
        ThresholdCommand::Less => current * step,
    })
}

/// Watches a growing trace for the first local maximum after warm-up. The
/// peak is confirmed once the following batch scores strictly lower.
#[derive(Clone, Debug)]
pub struct AutoThreshold {
    warmup: f64,
    before: Option<TracePoint>,
    last: Option<TracePoint>,
    confirmed: Option<f64>,
}

impl AutoThreshold {
    pub fn new(warmup: f64) -> Self {
        AutoThreshold {
            warmup,
            before: None,
            last: None,
            confirmed: None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.confirmed
    }

    /// Feeds the next trace point; returns the threshold on the call that
    /// confirms it.
    pub fn observe(&mut self, point: TracePoint) -> Option<f64> {
        if self.confirmed.is_some() {
            return None;
        }
        if let Some(cand) = self.last {
            let rises = self.before.is_none_or(|b| cand.outlierness > b.outlierness);
            if cand.time > self.warmup && rises && point.outlierness < cand.outlierness {
                self.confirmed = Some(cand.outlierness);
            }
        }
        self.before = self.last;
        self.last = Some(point);
        self.confirmed
    }
}

/// Initial threshold from a trace prefix, or `None` while pending.
pub fn auto_initial_threshold(trace: &OutliernessTrace, warmup: f64) -> Option<f64> {
    let mut auto = AutoThreshold::new(warmup);
    for p in trace.points() {
        if let Some(v) = auto.observe(*p) {
            return Some(v);
        }
    }
    None
}
