//! Bit-exact JSON snapshots of a mixture state.
//!
//! Every parameter array is stored as base64 of its little-endian IEEE-754
//! bytes, so a snapshot reproduces the state exactly. Matrices are
//! column-major. The Cholesky factors are recomputed on load.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{EngineConfig, EngineError, Factor, GmmComponent, GmmState};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSnapshot {
    pub weight: String,
    pub mean: String,
    pub covariance: String,
    pub mean_acc: String,
    pub cov_acc: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub version: u32,
    pub config: EngineConfig,
    pub dimension: usize,
    pub update_count: u64,
    pub components: Vec<ComponentSnapshot>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str, expected: usize, what: &str) -> Result<Vec<f64>, EngineError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| EngineError::Snapshot(format!("{what}: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(EngineError::Snapshot(format!(
            "{what}: expected {expected} values, found {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl GmmState {
    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            version: SNAPSHOT_VERSION,
            config: self.config,
            dimension: self.dimension,
            update_count: self.update_count,
            components: self
                .components
                .iter()
                .map(|c| ComponentSnapshot {
                    weight: encode(&[c.weight]),
                    mean: encode(c.mean.as_slice()),
                    covariance: encode(c.covariance.as_slice()),
                    mean_acc: encode(c.mean_acc.as_slice()),
                    cov_acc: encode(c.cov_acc.as_slice()),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &StateSnapshot) -> Result<Self, EngineError> {
        if snap.version != SNAPSHOT_VERSION {
            return Err(EngineError::Snapshot(format!("unsupported version {}", snap.version)));
        }
        snap.config.validate()?;
        if snap.components.len() != snap.config.components {
            return Err(EngineError::Snapshot(format!(
                "config declares {} components, snapshot has {}",
                snap.config.components,
                snap.components.len()
            )));
        }
        let m = snap.dimension;
        let components = snap
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let covariance = DMatrix::from_vec(m, m, decode(&c.covariance, m * m, "covariance")?);
                let factor = Factor::new(&covariance).ok_or(EngineError::Snapshot(format!(
                    "component {i} covariance is not positive definite"
                )))?;
                Ok(GmmComponent {
                    weight: decode(&c.weight, 1, "weight")?[0],
                    mean: DVector::from_vec(decode(&c.mean, m, "mean")?),
                    covariance,
                    mean_acc: DVector::from_vec(decode(&c.mean_acc, m, "mean_acc")?),
                    cov_acc: DMatrix::from_vec(m, m, decode(&c.cov_acc, m * m, "cov_acc")?),
                    factor,
                })
            })
            .collect::<Result<Vec<_>, EngineError>>()?;
        Ok(GmmState {
            components,
            update_count: snap.update_count,
            config: snap.config,
            dimension: m,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let snap: StateSnapshot = serde_json::from_str(text).map_err(|e| EngineError::Snapshot(e.to_string()))?;
        GmmState::from_snapshot(&snap)
    }
}
