use super::{DetectorError, OutliernessTrace};
use crate::eval::RankedCueList;

/// Indices of local maxima: strictly above both neighbours, or above the
/// only neighbour at either end of the trace.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] > values[i - 1];
            let right = i + 1 == n || values[i] > values[i + 1];
            left && right
        })
        .collect()
}

/// Greedy non-maximum suppression over the post-warm-up local maxima.
/// Returns up to `k` trace indices, most significant first.
pub fn top_k_peak_indices(
    trace: &OutliernessTrace,
    k: usize,
    warmup: f64,
    nms_window: f64,
) -> Result<Vec<usize>, DetectorError> {
    if k == 0 {
        return Err(DetectorError::Config("k must be at least 1".into()));
    }
    let points = trace.points();
    let values: Vec<f64> = points.iter().map(|p| p.outlierness).collect();
    let mut candidates: Vec<usize> = local_maxima(&values)
        .into_iter()
        .filter(|&i| points[i].time > warmup)
        .collect();
    candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    for c in candidates {
        if selected.len() == k {
            break;
        }
        let suppressed = selected
            .iter()
            .any(|&s| (points[s].time - points[c].time).abs() <= nms_window);
        if !suppressed {
            selected.push(c);
        }
    }
    Ok(selected)
}

/// The `k` most significant peak times of a trace, ranked.
pub fn extract_top_k_peaks(
    trace: &OutliernessTrace,
    k: usize,
    warmup: f64,
    nms_window: f64,
) -> Result<RankedCueList, DetectorError> {
    let idx = top_k_peak_indices(trace, k, warmup, nms_window)?;
    let times = idx.iter().map(|&i| trace.points()[i].time).collect();
    Ok(RankedCueList::new(times).expect("trace times are distinct"))
}
