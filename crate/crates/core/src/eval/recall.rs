use super::{EvalError, MatchingConfig, RankedCueList};

/// Greedy one-to-one assignment: truth cues in rank order each claim the
/// nearest unclaimed detected cue within tolerance (lower detected rank on
/// distance ties). Returns, per truth entry, the index of its match.
pub fn recall_matches(
    detected: &RankedCueList,
    truth: &RankedCueList,
    cfg: &MatchingConfig,
) -> Vec<Option<usize>> {
    let mut claimed = vec![false; detected.len()];
    truth
        .entries()
        .iter()
        .map(|&t| {
            let best = detected
                .entries()
                .iter()
                .enumerate()
                .filter(|(j, d)| !claimed[*j] && cfg.within(t, **d))
                .min_by(|a, b| (t - a.1).abs().total_cmp(&(t - b.1).abs()).then(a.0.cmp(&b.0)))
                .map(|(j, _)| j);
            if let Some(j) = best {
                claimed[j] = true;
            }
            best
        })
        .collect()
}

/// Fraction of truth cues captured by a detected cue within tolerance.
pub fn recall(detected: &RankedCueList, truth: &RankedCueList, cfg: &MatchingConfig) -> Result<f64, EvalError> {
    cfg.validate()?;
    if truth.is_empty() {
        return Err(EvalError::Undefined("recall needs at least one truth cue".into()));
    }
    let matched = recall_matches(detected, truth, cfg).iter().flatten().count();
    Ok(matched as f64 / truth.len() as f64)
}
