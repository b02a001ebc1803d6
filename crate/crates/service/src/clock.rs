//! Maps session time onto wall-clock deadlines for replay.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use tokio::time::Instant;

use crate::ServiceError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClockMode {
    /// One session second per wall second.
    Realtime,
    /// `factor` session seconds per wall second.
    Accelerated(f64),
    /// No waiting at all.
    Fast,
}

impl ClockMode {
    pub fn validate(&self) -> Result<(), ServiceError> {
        match self {
            ClockMode::Accelerated(f) if !(*f > 0.0 && f.is_finite()) => {
                Err(ServiceError::Config(format!("clock factor must be positive, got {f}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockMode::Realtime => f.write_str("realtime"),
            ClockMode::Accelerated(x) => write!(f, "x{x}"),
            ClockMode::Fast => f.write_str("fast"),
        }
    }
}

impl FromStr for ClockMode {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mode = match s {
            "realtime" => ClockMode::Realtime,
            "fast" => ClockMode::Fast,
            _ => {
                let factor = s
                    .strip_prefix('x')
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| ServiceError::Config(format!("clock must be realtime, x<factor> or fast, got `{s}`")))?;
                ClockMode::Accelerated(factor)
            }
        };
        mode.validate()?;
        Ok(mode)
    }
}

/// A clock anchored at the moment a session starts.
#[derive(Clone, Copy, Debug)]
pub struct SessionClock {
    mode: ClockMode,
    origin: Instant,
    start_time: f64,
}

impl SessionClock {
    /// `start_time` is the session timestamp that maps to `origin`.
    pub fn new(mode: ClockMode, origin: Instant, start_time: f64) -> Result<Self, ServiceError> {
        mode.validate()?;
        Ok(SessionClock {
            mode,
            origin,
            start_time,
        })
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    /// Wall-clock instant at which session time `t` is due, or `None` when
    /// it is due immediately.
    pub fn deadline(&self, t: f64) -> Option<Instant> {
        let factor = match self.mode {
            ClockMode::Fast => return None,
            ClockMode::Realtime => 1.0,
            ClockMode::Accelerated(f) => f,
        };
        let offset = ((t - self.start_time) / factor).max(0.0);
        Some(self.origin + Duration::from_secs_f64(offset))
    }
}
