//! Affine Gaussian policy with a state-independent diagonal covariance.
//!
//! The mean is `W·z + b` where `z` is the whitened observation. The flattened
//! parameter vector is `W` row-major, then `b`, then `log_std`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 3.0;
pub const DEFAULT_INIT_LOG_STD: f64 = -1.0;
/// Tag written to checkpoints describing [`PolicyParams::flatten`].
pub const FLATTEN_ORDER: &str = "W_row_major,b,log_std";

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PolicyError {
    #[error("parameter vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("normalizer has {got} entries, expected {expected}")]
    NormalizerMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    obs_dim: usize,
    act_dim: usize,
    /// `act_dim × obs_dim`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    log_std: Vec<f64>,
}

impl PolicyParams {
    pub fn new(obs_dim: usize, act_dim: usize, init_log_std: f64) -> Self {
        Self {
            obs_dim,
            act_dim,
            weights: vec![0.0; obs_dim * act_dim],
            bias: vec![0.0; act_dim],
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); act_dim],
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Length of the flattened parameter vector.
    pub fn dim(&self) -> usize {
        flat_dim(self.obs_dim, self.act_dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.obs_dim + col]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
        out.extend_from_slice(&self.log_std);
        out
    }

    /// Inverse of [`flatten`](Self::flatten). `log_std` entries are clamped.
    pub fn from_flat(obs_dim: usize, act_dim: usize, theta: &[f64]) -> Result<Self, PolicyError> {
        let expected = flat_dim(obs_dim, act_dim);
        if theta.len() != expected {
            return Err(PolicyError::LengthMismatch {
                expected,
                got: theta.len(),
            });
        }
        let nw = obs_dim * act_dim;
        Ok(Self {
            obs_dim,
            act_dim,
            weights: theta[..nw].to_vec(),
            bias: theta[nw..nw + act_dim].to_vec(),
            log_std: theta[nw + act_dim..]
                .iter()
                .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
                .collect(),
        })
    }

    /// `θ + Δθ` as a new value.
    pub fn stepped(&self, delta: &[f64]) -> Result<Self, PolicyError> {
        if delta.len() != self.dim() {
            return Err(PolicyError::LengthMismatch {
                expected: self.dim(),
                got: delta.len(),
            });
        }
        let theta: Vec<f64> = self.flatten().iter().zip(delta).map(|(a, b)| a + b).collect();
        Self::from_flat(self.obs_dim, self.act_dim, &theta)
    }
}

pub fn flat_dim(obs_dim: usize, act_dim: usize) -> usize {
    obs_dim * act_dim + 2 * act_dim
}

/// Per-dimension affine whitening `z = (x − mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard deviations below this are treated as 1 (constant channels).
const MIN_STD: f64 = 1e-8;

impl ObsNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Sample mean and standard deviation of `samples`.
    pub fn from_samples<'a>(dim: usize, samples: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut count = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for x in samples {
            count += 1;
            for i in 0..dim {
                sum[i] += x[i];
                sum_sq[i] += x[i] * x[i];
            }
        }
        if count == 0 {
            return Self::identity(dim);
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                let s = var.sqrt();
                if s < MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Self { mean, std }
    }

    /// Raises each scale to at least `floor[i]`, so channels that barely
    /// moved during calibration are not blown up later.
    pub fn with_std_floor(mut self, floor: &[f64]) -> Self {
        for (s, f) in self.std.iter_mut().zip(floor) {
            *s = s.max(*f);
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_into(&self, obs: &[f64], out: &mut [f64]) {
        for i in 0..self.mean.len() {
            out[i] = (obs[i] - self.mean[i]) / self.std[i];
        }
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; obs.len()];
        self.normalize_into(obs, &mut out);
        out
    }
}

/// Policy parameters together with the frozen observation whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGaussianPolicy {
    pub params: PolicyParams,
    pub normalizer: ObsNormalizer,
}

impl AffineGaussianPolicy {
    pub fn new(params: PolicyParams, normalizer: ObsNormalizer) -> Result<Self, PolicyError> {
        if normalizer.dim() != params.obs_dim() {
            return Err(PolicyError::NormalizerMismatch {
                expected: params.obs_dim(),
                got: normalizer.dim(),
            });
        }
        Ok(Self { params, normalizer })
    }

    /// Zero gains and bias, constant `log_std`, identity whitening.
    pub fn initial(obs_dim: usize, act_dim: usize, init_log_std: f64) -> Self {
        Self {
            params: PolicyParams::new(obs_dim, act_dim, init_log_std),
            normalizer: ObsNormalizer::identity(obs_dim),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.params.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.params.act_dim
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// Action mean for an already whitened observation.
    pub fn mean_whitened_into(&self, z: &[f64], out: &mut [f64]) {
        let p = &self.params;
        for (j, o) in out.iter_mut().enumerate().take(p.act_dim) {
            let row = &p.weights[j * p.obs_dim..(j + 1) * p.obs_dim];
            *o = p.bias[j] + row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        let z = self.normalizer.normalize(obs);
        let mut out = vec![0.0; self.act_dim()];
        self.mean_whitened_into(&z, &mut out);
        out
    }

    /// Samples `action = μ + σ ⊙ ξ` and returns its log-density.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let mut action = self.mean(obs);
        let mut log_prob = 0.0;
        for (j, a) in action.iter_mut().enumerate() {
            let xi: f64 = rng.sample(StandardNormal);
            let log_std = self.params.log_std[j];
            *a += log_std.exp() * xi;
            log_prob += -0.5 * xi * xi - log_std - HALF_LN_2PI;
        }
        (action, log_prob)
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        let mean = self.mean(obs);
        mean.iter()
            .zip(action)
            .zip(&self.params.log_std)
            .map(|((m, a), ls)| {
                let eps = (a - m) / ls.exp();
                -0.5 * eps * eps - ls - HALF_LN_2PI
            })
            .sum()
    }

    /// Score `∇_θ log π(a|s)` written into `out` (length [`dim`](Self::dim)).
    ///
    /// `z` is the whitened observation, `mean` the action mean at `z`.
    pub fn score_whitened_into(&self, z: &[f64], mean: &[f64], action: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let nw = p.obs_dim * p.act_dim;
        for j in 0..p.act_dim {
            let inv_std = (-p.log_std[j]).exp();
            let eps = (action[j] - mean[j]) * inv_std;
            let dmean = eps * inv_std;
            for (o, x) in out[j * p.obs_dim..(j + 1) * p.obs_dim].iter_mut().zip(z) {
                *o = dmean * x;
            }
            out[nw + j] = dmean;
            out[nw + p.act_dim + j] = eps * eps - 1.0;
        }
    }

    pub fn grad_log_prob(&self, obs: &[f64], action: &[f64]) -> Vec<f64> {
        let z = self.normalizer.normalize(obs);
        let mut mean = vec![0.0; self.act_dim()];
        self.mean_whitened_into(&z, &mut mean);
        let mut out = vec![0.0; self.dim()];
        self.score_whitened_into(&z, &mean, action, &mut out);
        out
    }

    pub fn with_params(&self, params: PolicyParams) -> Self {
        Self {
            params,
            normalizer: self.normalizer.clone(),
        }
    }
}
