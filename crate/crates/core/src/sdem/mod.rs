//! Gaussian mixture with sequentially discounting EM updates.
//!
//! For an input `x` the outlierness is the negative log mixture density
//! under the current parameters,
//!
//! ```text
//! a(x) = -ln sum_i c_i N(x | mu_i, S_i)
//! ```
//!
//! after which every component is updated with responsibility `g_i`
//! (computed from the same pre-update parameters) and forgetting rate `r`:
//!
//! ```text
//! c_i    <- (1 - r) c_i    + r g_i
//! mbar_i <- (1 - r) mbar_i + r g_i x
//! Sbar_i <- (1 - r) Sbar_i + r g_i x x^T
//! mu_i    = mbar_i / c_i
//! S_i     = Sbar_i / c_i - mu_i mu_i^T + ridge_i I
//! ```
//!
//! `ridge_i = ridge * (tr(S_i) / M + 1)` keeps near-constant dimensions
//! (e.g. a sensor held at its loss sentinel) from collapsing the covariance.
//! Densities go through a Cholesky factor of each `S_i`, refreshed on update.

mod select;
mod snapshot;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use snapshot::{ComponentSnapshot, StateSnapshot};

/// Lower clamp on the mixture log-density before negation.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("need at least {needed} frames to initialize, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("covariance of component {component} is not positive definite after update {update}")]
    NumericDegeneracy { component: usize, update: u64 },
    #[error("bad state snapshot: {0}")]
    Snapshot(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    #[default]
    Full,
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Number of mixture components, l.
    pub components: usize,
    /// Discount r applied per frame.
    pub forgetting_rate: f64,
    pub covariance_mode: CovarianceMode,
    pub ridge: f64,
    /// Seeds the farthest-point initialization.
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            components: 2,
            forgetting_rate: 0.1,
            covariance_mode: CovarianceMode::Full,
            ridge: 1e-6,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.components == 0 {
            return Err(EngineError::Config("need at least one component".into()));
        }
        if !(self.forgetting_rate > 0.0 && self.forgetting_rate < 1.0) {
            return Err(EngineError::Config(format!(
                "forgetting rate must lie in (0, 1), got {}",
                self.forgetting_rate
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(EngineError::Config(format!("ridge must be non-negative, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// One mixture component with its discounted accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmComponent {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    mean_acc: DVector<f64>,
    cov_acc: DMatrix<f64>,
    factor: Factor,
}

/// Lower Cholesky factor of the covariance and its log-determinant.
#[derive(Clone, Debug, PartialEq)]
struct Factor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl Factor {
    fn new(cov: &DMatrix<f64>) -> Option<Factor> {
        let lower = cov.clone().cholesky()?.unpack();
        let mut log_det = 0.0;
        for d in lower.diagonal().iter() {
            if !(*d > 0.0 && d.is_finite()) {
                return None;
            }
            log_det += 2.0 * d.ln();
        }
        Some(Factor { lower, log_det })
    }

    /// Squared Mahalanobis norm of `diff` via forward substitution.
    fn mahalanobis_sq(&self, diff: &mut [f64]) -> f64 {
        let m = diff.len();
        let l = self.lower.as_slice();
        let mut acc = 0.0;
        for i in 0..m {
            let mut s = diff[i];
            for j in 0..i {
                s -= l[i + j * m] * diff[j];
            }
            let y = s / l[i + i * m];
            diff[i] = y;
            acc += y * y;
        }
        acc
    }
}

impl GmmComponent {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn mean_acc(&self) -> &DVector<f64> {
        &self.mean_acc
    }

    pub fn cov_acc(&self) -> &DMatrix<f64> {
        &self.cov_acc
    }

    /// Regularizer added on top of `cov_acc / weight - mean mean^T`.
    pub fn applied_ridge(&self, ridge: f64) -> f64 {
        let m = self.mean.len();
        let raw_trace: f64 = (0..m)
            .map(|d| self.cov_acc[(d, d)] / self.weight - self.mean[d] * self.mean[d])
            .sum();
        ridge * (raw_trace / m as f64 + 1.0)
    }

    /// ln N(x | mean, covariance).
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let m = x.len();
        let mut diff: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(a, b)| a - b).collect();
        let q = self.factor.mahalanobis_sq(&mut diff);
        -0.5 * (m as f64 * (2.0 * PI).ln() + self.factor.log_det + q)
    }

    fn from_moments(
        weight: f64,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        mode: CovarianceMode,
    ) -> Option<GmmComponent> {
        let m = mean.len();
        let cov_acc = symmetric(m, mode, |i, j| weight * (covariance[(i, j)] + mean[i] * mean[j]));
        let factor = Factor::new(&covariance)?;
        Some(GmmComponent {
            weight,
            mean_acc: &mean * weight,
            mean,
            covariance,
            cov_acc,
            factor,
        })
    }
}

/// Mixture state for one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmState {
    components: Vec<GmmComponent>,
    update_count: u64,
    config: EngineConfig,
    dimension: usize,
}

fn check_dim(expected: usize, x: &[f64]) -> Result<(), EngineError> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(EngineError::Shape {
            expected,
            got: x.len(),
        })
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Builds a symmetric matrix from its lower triangle (diagonal only in
/// diagonal mode).
fn symmetric(m: usize, mode: CovarianceMode, entry: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, m);
    for j in 0..m {
        let rows = match mode {
            CovarianceMode::Full => j..m,
            CovarianceMode::Diagonal => j..j + 1,
        };
        for k in rows {
            let v = entry(k, j);
            out[(k, j)] = v;
            out[(j, k)] = v;
        }
    }
    out
}

/// Adds `ridge * (tr(cov)/M + 1)` to the diagonal.
fn regularize(cov: &mut DMatrix<f64>, ridge: f64) {
    let m = cov.nrows();
    let eps = ridge * (cov.trace() / m as f64 + 1.0);
    for d in 0..m {
        cov[(d, d)] += eps;
    }
}

impl GmmState {
    /// Seeds the mixture from a first batch: uniform weights, means at `l`
    /// frames picked by farthest-point traversal from a random start, and a
    /// shared diagonal covariance of the batch's per-dimension variances.
    pub fn initialize<R: AsRef<[f64]>>(first_batch: &[R], config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let l = config.components;
        let n = first_batch.len();
        if n < l || n == 0 {
            return Err(EngineError::InsufficientData { needed: l.max(1), got: n });
        }
        let m = first_batch[0].as_ref().len();
        if m == 0 {
            return Err(EngineError::Shape { expected: 1, got: 0 });
        }
        for row in first_batch {
            check_dim(m, row.as_ref())?;
        }

        let chosen = farthest_points(first_batch, l, config.seed);

        let mut mean = vec![0.0; m];
        for row in first_batch {
            for (acc, v) in mean.iter_mut().zip(row.as_ref()) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut cov = DMatrix::zeros(m, m);
        for row in first_batch {
            for (d, v) in row.as_ref().iter().enumerate() {
                cov[(d, d)] += (v - mean[d]) * (v - mean[d]) / n as f64;
            }
        }
        regularize(&mut cov, config.ridge);

        let weight = 1.0 / l as f64;
        let components = chosen
            .iter()
            .enumerate()
            .map(|(i, &idx)| {
                let mu = DVector::from_column_slice(first_batch[idx].as_ref());
                GmmComponent::from_moments(weight, mu, cov.clone(), config.covariance_mode)
                    .ok_or(EngineError::NumericDegeneracy { component: i, update: 0 })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GmmState {
            components,
            update_count: 0,
            config,
            dimension: m,
        })
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// ln(c_i) + ln N(x | mu_i, S_i) for each component.
    pub fn weighted_log_densities(&self, x: &[f64]) -> Result<Vec<f64>, EngineError> {
        check_dim(self.dimension, x)?;
        Ok(self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_density(x))
            .collect())
    }

    /// ln sum_i c_i N(x | mu_i, S_i), unclamped.
    pub fn log_mixture_density(&self, x: &[f64]) -> Result<f64, EngineError> {
        Ok(log_sum_exp(&self.weighted_log_densities(x)?))
    }

    /// Outlierness of a single frame. Does not touch the state.
    pub fn score_frame(&self, x: &[f64]) -> Result<f64, EngineError> {
        let log_p = self.log_mixture_density(x)?;
        Ok(-log_p.max(LOG_DENSITY_FLOOR))
    }

    /// Mean per-frame outlierness over a batch.
    pub fn score_batch<R: AsRef<[f64]>>(&self, batch: &[R]) -> Result<f64, EngineError> {
        if batch.is_empty() {
            return Err(EngineError::EmptyBatch);
        }
        let mut sum = 0.0;
        for row in batch {
            sum += self.score_frame(row.as_ref())?;
        }
        Ok(sum / batch.len() as f64)
    }

    /// Responsibilities of each component for `x` under the current state.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>, EngineError> {
        let w = self.weighted_log_densities(x)?;
        let norm = log_sum_exp(&w);
        Ok(w.iter().map(|v| (v - norm).exp()).collect())
    }

    /// One discounted EM step. Returns the responsibilities used. On error
    /// the state is left unchanged.
    pub fn update_frame(&mut self, x: &[f64]) -> Result<Vec<f64>, EngineError> {
        let gamma = self.responsibilities(x)?;
        let r = self.config.forgetting_rate;
        let keep = 1.0 - r;
        let m = self.dimension;
        let mode = self.config.covariance_mode;
        let update = self.update_count + 1;

        let mut next = Vec::with_capacity(self.components.len());
        for (i, (comp, g)) in self.components.iter().zip(&gamma).enumerate() {
            let rg = r * g;
            let weight = keep * comp.weight + rg;
            let mean_acc = DVector::from_iterator(
                m,
                comp.mean_acc.iter().zip(x).map(|(acc, v)| keep * acc + rg * v),
            );
            let cov_acc = symmetric(m, mode, |k, j| keep * comp.cov_acc[(k, j)] + rg * (x[k] * x[j]));

            if weight < f64::MIN_POSITIVE {
                // Starved component: its ratios are no longer representable,
                // so the last resolvable mean and covariance are kept.
                next.push(GmmComponent {
                    weight,
                    mean_acc,
                    cov_acc,
                    ..comp.clone()
                });
                continue;
            }

            let mean = &mean_acc / weight;
            let mut covariance = symmetric(m, mode, |k, j| cov_acc[(k, j)] / weight - mean[k] * mean[j]);
            regularize(&mut covariance, self.config.ridge);
            let factor = Factor::new(&covariance).ok_or(EngineError::NumericDegeneracy { component: i, update })?;
            next.push(GmmComponent {
                weight,
                mean,
                covariance,
                mean_acc,
                cov_acc,
                factor,
            });
        }
        self.components = next;
        self.update_count = update;
        Ok(gamma)
    }

    /// Applies [`Self::update_frame`] to each frame in order.
    pub fn update_batch<R: AsRef<[f64]>>(&mut self, batch: &[R]) -> Result<(), EngineError> {
        if batch.is_empty() {
            return Err(EngineError::EmptyBatch);
        }
        for row in batch {
            check_dim(self.dimension, row.as_ref())?;
        }
        let mut work = self.clone();
        for row in batch {
            work.update_frame(row.as_ref())?;
        }
        *self = work;
        Ok(())
    }

    /// Builds a state from explicit weights, means and covariances, as if
    /// no update had happened yet. Covariances are used as given, without
    /// the ridge.
    pub fn from_components(
        config: EngineConfig,
        parts: Vec<(f64, Vec<f64>, DMatrix<f64>)>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if parts.len() != config.components {
            return Err(EngineError::Config(format!(
                "expected {} components, got {}",
                config.components,
                parts.len()
            )));
        }
        let dimension = parts[0].1.len();
        for (w, mu, cov) in &parts {
            check_dim(dimension, mu)?;
            if cov.nrows() != dimension || cov.ncols() != dimension {
                return Err(EngineError::Shape {
                    expected: dimension,
                    got: cov.nrows(),
                });
            }
            if !(*w > 0.0 && w.is_finite()) {
                return Err(EngineError::Config(format!("weight must be positive, got {w}")));
            }
        }
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EngineError::Config(format!("weights sum to {total}, not 1")));
        }
        let components = parts
            .into_iter()
            .enumerate()
            .map(|(i, (w, mu, cov))| {
                GmmComponent::from_moments(w, DVector::from_vec(mu), cov, config.covariance_mode)
                    .ok_or(EngineError::NumericDegeneracy { component: i, update: 0 })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GmmState {
            components,
            update_count: 0,
            config,
            dimension,
        })
    }
}

/// Farthest-point traversal from a seeded random start; ties go to the
/// earliest frame. Returns `count` distinct frame indices.
pub fn farthest_points<R: AsRef<[f64]>>(rows: &[R], count: usize, seed: u64) -> Vec<usize> {
    let n = rows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);
    let dist = |a: usize, b: usize| -> f64 {
        rows[a]
            .as_ref()
            .iter()
            .zip(rows[b].as_ref())
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let mut chosen = vec![start];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist(i, start)).collect();
    let mut taken = vec![false; n];
    taken[start] = true;
    while chosen.len() < count.min(n) {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|i| !taken[*i]) {
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let Some(next) = best else { break };
        taken[next] = true;
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist(i, next));
        }
    }
    chosen
}

#[cfg(test)]
mod tests;
