use super::{check_dim, EngineError, GmmState};

impl GmmState {
    /// For each component, the index of the batch frame with the highest
    /// density under that component alone. Ties go to the earliest frame.
    pub fn representative_frames<R: AsRef<[f64]>>(&self, batch: &[R]) -> Result<Vec<usize>, EngineError> {
        if batch.is_empty() {
            return Err(EngineError::EmptyBatch);
        }
        for row in batch {
            check_dim(self.dimension, row.as_ref())?;
        }
        Ok(self
            .components
            .iter()
            .map(|comp| {
                let mut best = 0;
                let mut best_density = f64::NEG_INFINITY;
                for (n, row) in batch.iter().enumerate() {
                    let d = comp.log_density(row.as_ref());
                    if d > best_density {
                        best = n;
                        best_density = d;
                    }
                }
                best
            })
            .collect())
    }

    /// Indices of the `count` frames with the lowest mixture likelihood, in
    /// ascending likelihood order with earlier frames first on ties.
    pub fn outlier_frames<R: AsRef<[f64]>>(&self, batch: &[R], count: usize) -> Result<Vec<usize>, EngineError> {
        if batch.is_empty() {
            return Err(EngineError::EmptyBatch);
        }
        if count == 0 || count > batch.len() {
            return Err(EngineError::OutOfRange(format!(
                "outlier count {count} must lie in 1..={}",
                batch.len()
            )));
        }
        let mut scored = batch
            .iter()
            .enumerate()
            .map(|(n, row)| Ok((self.log_mixture_density(row.as_ref())?, n)))
            .collect::<Result<Vec<(f64, usize)>, EngineError>>()?;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(count).map(|(_, n)| n).collect())
    }
}
