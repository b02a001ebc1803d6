use super::{EvalError, MatchingConfig, RankedCueList};

/// Pairs entries of two lists that denote the same cue.
///
/// All cross pairs within tolerance are visited by increasing distance, then
/// by the smaller and the larger of the two ranks; a pair is accepted when
/// neither side is taken yet. Two conflicting pairs can never tie on that
/// key, so the result does not depend on argument order.
/// Returns, for each entry of `a`, the index of its partner in `b`.
pub fn match_across_lists(a: &RankedCueList, b: &RankedCueList, cfg: &MatchingConfig) -> Vec<Option<usize>> {
    let mut candidates: Vec<(f64, usize, usize, usize, usize)> = Vec::new();
    for (i, ta) in a.entries().iter().enumerate() {
        for (j, tb) in b.entries().iter().enumerate() {
            if cfg.within(*ta, *tb) {
                candidates.push(((ta - tb).abs(), i.min(j), i.max(j), i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut a_to_b = vec![None; a.len()];
    let mut b_taken = vec![false; b.len()];
    for (_, _, _, i, j) in candidates {
        if a_to_b[i].is_none() && !b_taken[j] {
            a_to_b[i] = Some(j);
            b_taken[j] = true;
        }
    }
    a_to_b
}

/// Minimizing Kendall distance between two top-k cue lists.
///
/// Cue identity across the lists comes from [`match_across_lists`]. Over
/// every unordered pair of distinct cues in the union, a penalty of 1 is
/// charged when
/// (i) one cue appears only in one list and the other only in the other,
/// (ii) both appear in one list and only the later-ranked one appears in the
/// other, or
/// (iii) both appear in both lists in opposite orders.
/// The sum is normalized by k(k-1)/2, with k the longer list's length.
pub fn kendall_min_distance(
    first: &RankedCueList,
    second: &RankedCueList,
    cfg: &MatchingConfig,
) -> Result<f64, EvalError> {
    cfg.validate()?;
    let k = first.len().max(second.len());
    if k < 2 {
        return Err(EvalError::Undefined(format!(
            "top-k comparison needs k >= 2, got {k}"
        )));
    }
    let matches = match_across_lists(first, second, cfg);

    // Union elements: ids 0..first.len() are first's entries; unmatched
    // entries of second get fresh ids after those.
    let mut pos_first: Vec<Option<usize>> = (0..first.len()).map(Some).collect();
    let mut pos_second: Vec<Option<usize>> = vec![None; first.len()];
    let mut second_id = vec![None; second.len()];
    for (i, m) in matches.iter().enumerate() {
        if let Some(j) = m {
            second_id[*j] = Some(i);
        }
    }
    for (j, id) in second_id.iter().enumerate() {
        match id {
            Some(i) => pos_second[*i] = Some(j),
            None => {
                pos_first.push(None);
                pos_second.push(Some(j));
            }
        }
    }

    let n = pos_first.len();
    let mut penalty = 0usize;
    for x in 0..n {
        for y in (x + 1)..n {
            penalty += pair_penalty((pos_first[x], pos_first[y]), (pos_second[x], pos_second[y]));
        }
    }
    Ok(penalty as f64 / (k * (k - 1) / 2) as f64)
}

type Positions = (Option<usize>, Option<usize>);

fn pair_penalty(p: Positions, q: Positions) -> usize {
    let full = |x: Positions| x.0.is_some() && x.1.is_some();
    let single = |x: Positions| x.0.is_some() != x.1.is_some();
    match (p, q) {
        // Both in both lists: discordant order.
        ((Some(a1), Some(b1)), (Some(a2), Some(b2))) => usize::from((a1 < b1) != (a2 < b2)),
        // Both in one list, exactly one in the other: the present one must lead.
        _ if full(p) && single(q) => later_is_present(p, q),
        _ if full(q) && single(p) => later_is_present(q, p),
        // Each cue in a different list only.
        ((Some(_), None), (None, Some(_))) | ((None, Some(_)), (Some(_), None)) => 1,
        _ => 0,
    }
}

fn later_is_present(full: Positions, partial: Positions) -> usize {
    let (Some(x), Some(y)) = full else { return 0 };
    let x_present = partial.0.is_some();
    usize::from(if x_present { x > y } else { y > x })
}
