//! Discounted EM for a Gaussian mixture in extended precision.

use rug::ops::Pow;
use rug::Float;

/// Mantissa bits used for every intermediate value.
pub const PRECISION: u32 = 256;

fn f(v: f64) -> Float {
    Float::with_val(PRECISION, v)
}

/// One component as plain numbers, row-major covariances.
#[derive(Clone, Debug)]
pub struct PlainComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
    pub mean_acc: Vec<f64>,
    pub cov_acc: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Component {
    weight: Float,
    mean: Vec<Float>,
    covariance: Vec<Float>,
    mean_acc: Vec<Float>,
    cov_acc: Vec<Float>,
}

/// Reference mixture stepping the discounted recurrences
///   c <- (1-r) c + r g
///   mbar <- (1-r) mbar + r g x,          mu = mbar / c
///   Sbar <- (1-r) Sbar + r g x x^T,      S = Sbar / c - mu mu^T + eps I
/// where g are the responsibilities under the parameters before the step and
/// eps = ridge * (tr(S)/M + 1) is taken from the unregularized S.
#[derive(Clone, Debug)]
pub struct ReferenceMixture {
    dim: usize,
    rate: Float,
    ridge: Float,
    diagonal: bool,
    components: Vec<Component>,
}

impl ReferenceMixture {
    pub fn new(components: &[PlainComponent], forgetting_rate: f64, ridge: f64, diagonal: bool) -> Self {
        let dim = components[0].mean.len();
        let lift = |v: &[f64]| v.iter().map(|x| f(*x)).collect::<Vec<_>>();
        ReferenceMixture {
            dim,
            rate: f(forgetting_rate),
            ridge: f(ridge),
            diagonal,
            components: components
                .iter()
                .map(|c| Component {
                    weight: f(c.weight),
                    mean: lift(&c.mean),
                    covariance: lift(&c.covariance),
                    mean_acc: lift(&c.mean_acc),
                    cov_acc: lift(&c.cov_acc),
                })
                .collect(),
        }
    }

    /// ln N(x | mean_i, cov_i) by Cholesky decomposition.
    fn log_density(&self, i: usize, x: &[f64]) -> Float {
        let m = self.dim;
        let c = &self.components[i];
        let mut l = vec![f(0.0); m * m];
        for row in 0..m {
            for col in 0..=row {
                let mut s = c.covariance[row * m + col].clone();
                for k in 0..col {
                    s -= Float::with_val(PRECISION, &l[row * m + k] * &l[col * m + k]);
                }
                if row == col {
                    assert!(s > 0, "reference covariance is not positive definite");
                    l[row * m + col] = s.sqrt();
                } else {
                    l[row * m + col] = s / &l[col * m + col];
                }
            }
        }
        // Forward substitution for L z = x - mu.
        let mut z = vec![f(0.0); m];
        for row in 0..m {
            let mut s = f(x[row]) - &c.mean[row];
            for k in 0..row {
                s -= Float::with_val(PRECISION, &l[row * m + k] * &z[k]);
            }
            z[row] = s / &l[row * m + row];
        }
        let mut quad = f(0.0);
        let mut log_det = f(0.0);
        for d in 0..m {
            quad += Float::with_val(PRECISION, (&z[d]).pow(2u32));
            log_det += Float::with_val(PRECISION, l[d * m + d].ln_ref()) * 2u32;
        }
        let two_pi = Float::with_val(PRECISION, rug::float::Constant::Pi) * 2u32;
        -(two_pi.ln() * (m as u32) + log_det + quad) / 2u32
    }

    /// ln sum_i c_i N(x | mu_i, S_i).
    pub fn log_mixture(&self, x: &[f64]) -> Float {
        let terms: Vec<Float> = (0..self.components.len())
            .map(|i| self.components[i].weight.clone().ln() + self.log_density(i, x))
            .collect();
        let max = terms.iter().max_by(|a, b| a.partial_cmp(b).unwrap()).unwrap().clone();
        let mut sum = f(0.0);
        for t in &terms {
            sum += (t.clone() - &max).exp();
        }
        max + sum.ln()
    }

    /// Negative log mixture density, as f64.
    pub fn score(&self, x: &[f64]) -> f64 {
        (-self.log_mixture(x)).to_f64()
    }

    /// One recurrence step; returns the responsibilities.
    pub fn update(&mut self, x: &[f64]) -> Vec<f64> {
        let m = self.dim;
        let norm = self.log_mixture(x);
        let gamma: Vec<Float> = (0..self.components.len())
            .map(|i| (self.components[i].weight.clone().ln() + self.log_density(i, x) - &norm).exp())
            .collect();
        let keep = f(1.0) - &self.rate;
        for (c, g) in self.components.iter_mut().zip(&gamma) {
            let rg = Float::with_val(PRECISION, &self.rate * g);
            c.weight = Float::with_val(PRECISION, &keep * &c.weight) + &rg;
            for (d, &xd) in x.iter().enumerate() {
                c.mean_acc[d] = Float::with_val(PRECISION, &keep * &c.mean_acc[d]) + Float::with_val(PRECISION, &rg * xd);
                c.mean[d] = Float::with_val(PRECISION, &c.mean_acc[d] / &c.weight);
            }
            for a in 0..m {
                for b in 0..m {
                    let idx = a * m + b;
                    if self.diagonal && a != b {
                        c.cov_acc[idx] = f(0.0);
                        continue;
                    }
                    c.cov_acc[idx] = Float::with_val(PRECISION, &keep * &c.cov_acc[idx])
                        + Float::with_val(PRECISION, &rg * (x[a] * 1.0)) * x[b];
                }
            }
            let mut trace = f(0.0);
            for a in 0..m {
                for b in 0..m {
                    let idx = a * m + b;
                    c.covariance[idx] = Float::with_val(PRECISION, &c.cov_acc[idx] / &c.weight)
                        - Float::with_val(PRECISION, &c.mean[a] * &c.mean[b]);
                    if self.diagonal && a != b {
                        c.covariance[idx] = f(0.0);
                    }
                }
                trace += &c.covariance[a * m + a];
            }
            let eps = Float::with_val(PRECISION, &self.ridge * (trace / (m as u32) + 1u32));
            for d in 0..m {
                c.covariance[d * m + d] += &eps;
            }
        }
        gamma.iter().map(Float::to_f64).collect()
    }

    /// Current parameters rounded to f64.
    pub fn components(&self) -> Vec<PlainComponent> {
        let down = |v: &[Float]| v.iter().map(Float::to_f64).collect::<Vec<_>>();
        self.components
            .iter()
            .map(|c| PlainComponent {
                weight: c.weight.to_f64(),
                mean: down(&c.mean),
                covariance: down(&c.covariance),
                mean_acc: down(&c.mean_acc),
                cov_acc: down(&c.cov_acc),
            })
            .collect()
    }
}

/// Largest elementwise deviation of `got` from `want`, relative to the
/// larger of |want| and the largest magnitude in `want`.
pub fn max_relative_error(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / w.abs().max(scale))
        .fold(0.0, f64::max)
}
