use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Cue timestamps in rank order; index 0 is rank 1, the most significant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RankedCueList {
    entries: Vec<f64>,
}

impl RankedCueList {
    pub fn new(entries: Vec<f64>) -> Result<Self, EvalError> {
        if let Some(t) = entries.iter().find(|t| !t.is_finite()) {
            return Err(EvalError::InvalidList(format!("non-finite timestamp {t}")));
        }
        let mut sorted = entries.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(EvalError::InvalidList("timestamps must be distinct".into()));
        }
        Ok(RankedCueList { entries })
    }

    /// Builds a list from `(timestamp, rank)` pairs in any order. Ranks must
    /// be exactly 1..=k.
    pub fn from_ranked(pairs: impl IntoIterator<Item = (f64, usize)>) -> Result<Self, EvalError> {
        let mut pairs: Vec<(f64, usize)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.1);
        for (i, (_, rank)) in pairs.iter().enumerate() {
            if *rank != i + 1 {
                return Err(EvalError::InvalidList(format!(
                    "ranks must be 1..={} without gaps or repeats",
                    pairs.len()
                )));
            }
        }
        RankedCueList::new(pairs.into_iter().map(|p| p.0).collect())
    }

    /// Ranks scored events by descending score, earlier time first on ties.
    pub fn from_scored(events: impl IntoIterator<Item = (f64, f64)>) -> Result<Self, EvalError> {
        let mut events: Vec<(f64, f64)> = events.into_iter().collect();
        events.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
        RankedCueList::new(events.into_iter().map(|e| e.0).collect())
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn translated(&self, offset: f64) -> RankedCueList {
        RankedCueList {
            entries: self.entries.iter().map(|t| t + offset).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for RankedCueList {
    type Error = EvalError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        RankedCueList::new(v)
    }
}

impl From<RankedCueList> for Vec<f64> {
    fn from(list: RankedCueList) -> Self {
        list.entries
    }
}

#[derive(Serialize, Deserialize)]
struct TruthRecord {
    t: f64,
    rank: usize,
}

/// Parses a ground-truth file: a JSON array of `{"t": seconds, "rank": n}`.
pub fn read_ground_truth<R: Read>(source: R) -> Result<RankedCueList, EvalError> {
    let records: Vec<TruthRecord> =
        serde_json::from_reader(source).map_err(|e| EvalError::GroundTruth(e.to_string()))?;
    RankedCueList::from_ranked(records.into_iter().map(|r| (r.t, r.rank)))
}

pub fn write_ground_truth<W: Write>(mut out: W, list: &RankedCueList) -> Result<(), EvalError> {
    let records: Vec<TruthRecord> = list
        .entries
        .iter()
        .enumerate()
        .map(|(i, t)| TruthRecord { t: *t, rank: i + 1 })
        .collect();
    serde_json::to_writer_pretty(&mut out, &records).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}
