//! Quadratic value baseline and generalized advantage estimation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ValueError {
    #[error("normal equations are empty")]
    Empty,
    #[error("regularized normal equations are numerically singular (ridge = {ridge})")]
    SingularSystem { ridge: f64 },
}

/// `[s, s⊙s, u, u², u³, 1]` with `u = t / horizon`.
pub fn feature_dim(obs_dim: usize) -> usize {
    2 * obs_dim + 4
}

pub fn features_into(obs: &[f64], t: usize, horizon: usize, out: &mut [f64]) {
    let n = obs.len();
    out[..n].copy_from_slice(obs);
    for (o, x) in out[n..2 * n].iter_mut().zip(obs) {
        *o = x * x;
    }
    let u = t as f64 / horizon as f64;
    out[2 * n] = u;
    out[2 * n + 1] = u * u;
    out[2 * n + 2] = u * u * u;
    out[2 * n + 3] = 1.0;
}

pub fn features(obs: &[f64], t: usize, horizon: usize) -> Vec<f64> {
    let mut out = vec![0.0; feature_dim(obs.len())];
    features_into(obs, t, horizon, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub weights: Vec<f64>,
    pub ridge: f64,
}

impl ValueParams {
    /// The all-zero baseline.
    pub fn zeros(dim: usize, ridge: f64) -> Self {
        Self {
            weights: vec![0.0; dim],
            ridge,
        }
    }

    pub fn predict_features(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn predict(&self, obs: &[f64], t: usize, horizon: usize) -> f64 {
        self.predict_features(&features(obs, t, horizon))
    }
}

/// Sufficient statistics `XᵀX`, `Xᵀy` of a least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub dim: usize,
    /// Full symmetric `dim × dim`, row-major.
    pub xtx: Vec<f64>,
    pub xty: Vec<f64>,
    pub count: u64,
}

impl NormalEquations {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            xtx: vec![0.0; dim * dim],
            xty: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn add_sample(&mut self, x: &[f64], y: f64) {
        let d = self.dim;
        for i in 0..d {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = &mut self.xtx[i * d..(i + 1) * d];
            for (r, xj) in row.iter_mut().zip(x) {
                *r += xi * xj;
            }
            self.xty[i] += xi * y;
        }
        self.count += 1;
    }

    /// Elementwise sum; associative and commutative up to rounding.
    pub fn merge(&mut self, other: &NormalEquations) {
        assert_eq!(self.dim, other.dim, "normal equation dimensions differ");
        for (a, b) in self.xtx.iter_mut().zip(&other.xtx) {
            *a += b;
        }
        for (a, b) in self.xty.iter_mut().zip(&other.xty) {
            *a += b;
        }
        self.count += other.count;
    }
}

/// Ridge solve of `(XᵀX + ridge·I) w = Xᵀy`.
pub fn fit(neq: &NormalEquations, ridge: f64) -> Result<ValueParams, ValueError> {
    if neq.count == 0 {
        return Err(ValueError::Empty);
    }
    let d = neq.dim;
    let mut a = DMatrix::from_row_slice(d, d, &neq.xtx);
    for i in 0..d {
        a[(i, i)] += ridge;
    }
    let b = DVector::from_column_slice(&neq.xty);
    let chol = a.cholesky().ok_or(ValueError::SingularSystem { ridge })?;
    let w = chol.solve(&b);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ValueError::SingularSystem { ridge });
    }
    Ok(ValueParams {
        weights: w.as_slice().to_vec(),
        ridge,
    })
}

/// Discounted returns-to-go `Σ_{t'≥t} γ^{t'−t} r_{t'}`.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// TD residuals `δ_t = r_t + γ V(s_{t+1}) − V(s_t)`; `values` has one more
/// entry than `rewards` (the bootstrap value).
pub fn td_residuals(rewards: &[f64], values: &[f64], gamma: f64) -> Vec<f64> {
    assert_eq!(values.len(), rewards.len() + 1, "need T+1 values for T rewards");
    rewards
        .iter()
        .enumerate()
        .map(|(t, r)| r + gamma * values[t + 1] - values[t])
        .collect()
}

/// GAE by the backward recursion `A_t = δ_t + γλ A_{t+1}`. Not standardized.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let deltas = td_residuals(rewards, values, gamma);
    let mut adv = vec![0.0; deltas.len()];
    let mut acc = 0.0;
    for t in (0..deltas.len()).rev() {
        acc = deltas[t] + gamma * lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// Shifts and scales to zero mean and unit standard deviation in place.
/// A batch with (near) zero spread is only centered.
pub fn standardize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
    for v in values.iter_mut() {
        *v = (*v - mean) * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Explicit-sum oracle `A_t = Σ_l (γλ)^l δ_{t+l}`.
    fn gae_explicit(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
        let deltas = td_residuals(rewards, values, gamma);
        (0..deltas.len())
            .map(|t| {
                (t..deltas.len())
                    .map(|k| (gamma * lambda).powi((k - t) as i32) * deltas[k])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn feature_layout() {
        let x = features(&[0.0; 16], 0, 500);
        assert_eq!(x.len(), 36);
        assert_eq!(feature_dim(16), 36);
        assert_eq!(x.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(x[35], 1.0);
        let end = features(&[2.0; 16], 500, 500);
        assert_eq!(&end[32..35], &[1.0, 1.0, 1.0]);
        assert_eq!(end[16], 4.0);
    }

    #[test]
    fn exact_interpolation_single_feature() {
        let mut neq = NormalEquations::new(1);
        neq.add_sample(&[1.0], 2.0);
        neq.add_sample(&[1.0], 2.0);
        let w = fit(&neq, 0.0).unwrap().weights;
        assert!((w[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn recovers_synthetic_weights() {
        let truth: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut neq = NormalEquations::new(36);
        let mut state = 1u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for t in 0..2000 {
            let obs: Vec<f64> = (0..16).map(|_| next()).collect();
            let x = features(&obs, t % 500, 500);
            let y: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum();
            neq.add_sample(&x, y);
        }
        let w = fit(&neq, 1e-8).unwrap();
        for (a, b) in w.weights.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn huge_ridge_shrinks_to_zero_and_empty_is_error() {
        let mut neq = NormalEquations::new(2);
        neq.add_sample(&[1.0, 2.0], 3.0);
        let w = fit(&neq, 1e12).unwrap();
        assert!(w.weights.iter().all(|v| v.abs() < 1e-10));
        assert_eq!(fit(&NormalEquations::new(2), 1.0), Err(ValueError::Empty));
        assert!(matches!(fit(&neq, 0.0), Err(ValueError::SingularSystem { .. })));
    }

    #[test]
    fn hand_unrolled_gae() {
        let adv = gae(&[1.0, 1.0], &[0.5, 0.5, 0.0], 1.0, 0.5);
        assert_eq!(td_residuals(&[1.0, 1.0], &[0.5, 0.5, 0.0], 1.0), vec![1.0, 0.5]);
        assert_eq!(adv, vec![1.25, 0.5]);
    }

    #[test]
    fn degenerate_lambdas() {
        let r = [0.3, -0.2, 0.9, 0.1];
        let v = [0.5, 0.1, -0.4, 0.2, 0.7];
        assert_eq!(gae(&r, &v, 0.9, 0.0), td_residuals(&r, &v, 0.9));
        let full = gae(&r, &v, 1.0, 1.0);
        for t in 0..4 {
            let mc: f64 = r[t..].iter().sum::<f64>() + v[4] - v[t];
            assert!((full[t] - mc).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn recursion_matches_explicit_sum(
            rewards in prop::collection::vec(-2.0f64..2.0, 1..50),
            seed in prop::collection::vec(-3.0f64..3.0, 51),
            gamma in 0.0f64..=1.0,
            lambda in 0.0f64..=1.0,
        ) {
            let values = &seed[..rewards.len() + 1];
            let fast = gae(&rewards, values, gamma, lambda);
            let slow = gae_explicit(&rewards, values, gamma, lambda);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn standardized_batch_moments(values in prop::collection::vec(-100.0f64..100.0, 2..200)) {
            let mut v = values.clone();
            standardize(&mut v);
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() <= 1e-10);
            let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
            if spread > 1e-6 {
                prop_assert!((std - 1.0).abs() <= 1e-10);
            }
        }

        #[test]
        fn fit_never_worse_than_zero(
            rows in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), -5.0f64..5.0), 1..40),
            ridge in 1e-6f64..10.0,
        ) {
            let mut neq = NormalEquations::new(3);
            for (x, y) in &rows {
                neq.add_sample(x, *y);
            }
            let w = fit(&neq, ridge).unwrap();
            let objective = |w: &[f64]| {
                rows.iter().map(|(x, y)| {
                    let p: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
                    (p - y).powi(2)
                }).sum::<f64>() + ridge * w.iter().map(|v| v * v).sum::<f64>()
            };
            prop_assert!(objective(&w.weights) <= objective(&[0.0; 3]) + 1e-9);
        }
    }
}
