//! Per-modality detection quality over a suite of labeled sessions.

use std::io::Write;

use super::{kendall_min_distance, recall, EvalError, MatchingConfig, RankedCueList};
use crate::detector::{extract_top_k_peaks, run_detector, DetectorConfig, ThresholdMode};
use crate::feature::{resample_and_batch, Channel, ChannelSchema, FeatureFrame};

/// A recorded session together with its ranked ground-truth cues.
#[derive(Clone, Debug)]
pub struct LabeledSession {
    pub schema: ChannelSchema,
    pub frames: Vec<FeatureFrame>,
    pub truth: RankedCueList,
}

/// Metrics for one channel subset, averaged over sessions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityRow {
    pub subset: ChannelSchema,
    pub recall: f64,
    pub recall_std: f64,
    pub tau_distance: f64,
    pub tau_distance_std: f64,
    pub sessions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalityReport {
    pub tolerance: f64,
    pub rows: Vec<ModalityRow>,
}

/// Runs top-k detection (k = number of truth cues) on every session
/// restricted to each subset, and scores the peak list against the truth.
/// The rank distance averages only sessions with at least two truth cues
/// and is NaN when there are none.
pub fn modality_report(
    sessions: &[LabeledSession],
    subsets: &[ChannelSchema],
    cfg: &DetectorConfig,
    matching: &MatchingConfig,
) -> Result<ModalityReport, EvalError> {
    matching.validate()?;
    if sessions.is_empty() {
        return Err(EvalError::Undefined("report needs at least one session".into()));
    }
    if subsets.is_empty() {
        return Err(EvalError::Undefined("report needs at least one channel subset".into()));
    }
    let mut rows = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let mut recalls = Vec::with_capacity(sessions.len());
        let mut taus = Vec::with_capacity(sessions.len());
        for session in sessions {
            let detected = detect_ranked(session, subset, cfg)?;
            recalls.push(recall(&detected, &session.truth, matching)?);
            // The rank distance is undefined for single-cue sessions; they
            // count towards recall only.
            match kendall_min_distance(&detected, &session.truth, matching) {
                Ok(tau) => taus.push(tau),
                Err(EvalError::Undefined(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let (recall, recall_std) = mean_std(&recalls);
        let (tau_distance, tau_distance_std) = mean_std(&taus);
        rows.push(ModalityRow {
            subset: *subset,
            recall,
            recall_std,
            tau_distance,
            tau_distance_std,
            sessions: sessions.len(),
        });
    }
    Ok(ModalityReport {
        tolerance: matching.tolerance,
        rows,
    })
}

fn detect_ranked(
    session: &LabeledSession,
    subset: &ChannelSchema,
    cfg: &DetectorConfig,
) -> Result<RankedCueList, EvalError> {
    let frames = session
        .frames
        .iter()
        .map(|f| f.project(&session.schema, subset))
        .collect::<Result<Vec<_>, _>>()?;
    let batches = resample_and_batch(frames, *subset, &cfg.sampling)?;
    let k = session.truth.len().max(1);
    let run_cfg = DetectorConfig {
        threshold_mode: ThresholdMode::TopK(k),
        ..*cfg
    };
    let (_, trace) = run_detector(&batches, &run_cfg)?;
    Ok(extract_top_k_peaks(&trace, k, cfg.sampling.warmup, cfg.nms_window)?)
}

/// Mean and population standard deviation; NaN for an empty slice.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row per subset with 0/1 channel columns, preceded by a comment line
/// stating the cue matching rule.
pub fn write_report_csv<W: Write>(mut out: W, report: &ModalityReport) -> Result<(), EvalError> {
    writeln!(
        out,
        "# cues are matched across lists when at most {} s apart",
        report.tolerance
    )?;
    writeln!(out, "posture,gaze,face,recall,recall_std,tau_distance,tau_distance_std")?;
    for row in &report.rows {
        let flag = |c: Channel| u8::from(row.subset.has(c));
        writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4},{:.4}",
            flag(Channel::Posture),
            flag(Channel::Gaze),
            flag(Channel::Face),
            row.recall,
            row.recall_std,
            row.tau_distance,
            row.tau_distance_std
        )?;
    }
    out.flush()?;
    Ok(())
}
