use serde::{Deserialize, Serialize};

use super::{FeatureBatch, FeatureFrame};

/// Per-dimension z-scoring against statistics of a reference batch.
/// Dimensions with zero spread are only centered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(batch: &FeatureBatch) -> Self {
        let m = batch.schema().dimensions();
        let n = batch.len() as f64;
        let mut mean = vec![0.0; m];
        for f in batch.frames() {
            for (acc, v) in mean.iter_mut().zip(&f.values) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; m];
        for f in batch.frames() {
            for ((acc, v), mu) in var.iter_mut().zip(&f.values).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, frame: &FeatureFrame) -> FeatureFrame {
        let mut out = frame.clone();
        for ((v, mu), sd) in out.values.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - mu) / sd;
        }
        out
    }

    pub fn apply_batch(&self, batch: &FeatureBatch) -> FeatureBatch {
        batch.map_frames(|f| self.apply(f))
    }
}
