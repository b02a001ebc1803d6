//! Detection quality against ground-truth cue lists.

mod kendall;
mod ranked;
mod recall;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kendall::{kendall_min_distance, match_across_lists};
pub use ranked::{read_ground_truth, write_ground_truth, RankedCueList};
pub use recall::{recall, recall_matches};
pub use report::{modality_report, write_report_csv, LabeledSession, ModalityReport, ModalityRow};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid cue list: {0}")]
    InvalidList(String),
    #[error("invalid ground truth file: {0}")]
    GroundTruth(String),
    #[error(transparent)]
    Feature(#[from] crate::feature::FeatureError),
    #[error(transparent)]
    Detector(#[from] crate::detector::DetectorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Two timestamps denote the same cue when at most `tolerance` seconds apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingConfig {
    pub tolerance: f64,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig { tolerance: 30.0 }
    }
}

impl MatchingConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.tolerance >= 0.0 {
            Ok(())
        } else {
            Err(EvalError::Undefined(format!(
                "tolerance must be non-negative, got {}",
                self.tolerance
            )))
        }
    }

    pub(crate) fn within(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.tolerance
    }
}
