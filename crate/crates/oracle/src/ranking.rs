//! Exhaustive oracles for the top-k list metrics, over integer cue ids.

/// Position of each id in a ranked list, if present.
fn position(list: &[u32], id: u32) -> Option<usize> {
    list.iter().position(|&v| v == id)
}

/// Minimizing Kendall distance by classifying every unordered pair of the
/// union of both lists against the three penalty cases, normalized by
/// k(k-1)/2 with k the longer list's length.
pub fn kendall_min_by_cases(first: &[u32], second: &[u32]) -> f64 {
    let mut union: Vec<u32> = first.iter().chain(second).copied().collect();
    union.sort_unstable();
    union.dedup();
    let mut penalty = 0u32;
    for (a_idx, &a) in union.iter().enumerate() {
        for &b in &union[a_idx + 1..] {
            let (a1, b1) = (position(first, a), position(first, b));
            let (a2, b2) = (position(second, a), position(second, b));
            let charged = match (a1, b1, a2, b2) {
                // Case (iii): both in both lists, opposite orders.
                (Some(p), Some(q), Some(r), Some(s)) => (p < q) != (r < s),
                // Case (i): one only in the first list, the other only in the second.
                (Some(_), None, None, Some(_)) | (None, Some(_), Some(_), None) => true,
                // Case (ii): both in one list, only one in the other, and the
                // present one is ranked later in the full list.
                (Some(p), Some(q), Some(_), None) | (Some(q), Some(p), None, Some(_)) => p > q,
                (Some(_), None, Some(r), Some(s)) | (None, Some(_), Some(s), Some(r)) => r > s,
                _ => false,
            };
            penalty += u32::from(charged);
        }
    }
    let k = first.len().max(second.len()) as f64;
    f64::from(penalty) / (k * (k - 1.0) / 2.0)
}

/// Size of a maximum one-to-one matching between truth and detected
/// timestamps at most `tolerance` apart, by dynamic programming over every
/// subset of detected entries.
pub fn maximum_matching(truth: &[f64], detected: &[f64], tolerance: f64) -> usize {
    assert!(detected.len() <= 20, "exhaustive matching is limited to 20 detected entries");
    let full = 1usize << detected.len();
    // size[mask]: largest matching of the truth entries seen so far whose
    // partners are exactly the detected entries in `mask`.
    let mut size: Vec<Option<usize>> = vec![None; full];
    size[0] = Some(0);
    for &t in truth {
        let mut next = size.clone();
        for (mask, entry) in size.iter().enumerate() {
            let Some(current) = *entry else { continue };
            for (j, &d) in detected.iter().enumerate() {
                if mask & (1 << j) == 0 && (t - d).abs() <= tolerance {
                    let with = mask | (1 << j);
                    next[with] = next[with].max(Some(current + 1));
                }
            }
        }
        size = next;
    }
    size.into_iter().flatten().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kendall_reference_values() {
        assert_eq!(kendall_min_by_cases(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(kendall_min_by_cases(&[1, 2], &[3, 4]), 4.0);
        let first: Vec<u32> = (0..10).collect();
        let second: Vec<u32> = (10..20).collect();
        assert!((kendall_min_by_cases(&first, &second) - 20.0 / 9.0).abs() < 1e-15);
        assert!((kendall_min_by_cases(&[1, 2, 3], &[2, 1, 3]) - 1.0 / 3.0).abs() < 1e-15);
        // Only {3,4} is charged: each appears in just one list.
        assert!((kendall_min_by_cases(&[1, 2, 3], &[1, 2, 4]) - 1.0 / 3.0).abs() < 1e-15);
        // {1,2}: the second list keeps only 1, which the first ranks later.
        assert!((kendall_min_by_cases(&[2, 1], &[1, 3]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matching_prefers_the_global_optimum() {
        // Greedy nearest for truth 10 would take 15 and strand truth 40.
        assert_eq!(maximum_matching(&[10.0, 40.0], &[15.0, -10.0], 30.0), 2);
        assert_eq!(maximum_matching(&[0.0], &[], 30.0), 0);
        assert_eq!(maximum_matching(&[0.0, 1.0], &[0.5], 30.0), 1);
    }
}
