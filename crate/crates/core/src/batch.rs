//! Per-iteration sufficient statistics for the policy update and the value
//! refit, accumulated in fixed point so that merging is exact.
//!
//! Each trajectory is reduced in `f64`, then rounded once onto a 2⁻⁶⁰ grid
//! and summed as `i128`. Integer addition is associative, so any split of a
//! trajectory set across workers aggregates to the same bits.

use nalgebra::{DMatrix, DVector};

use crate::policy::AffineGaussianPolicy;
use crate::task::Trajectory;
use crate::value::{self, NormalEquations, ValueParams};

pub const FIXED_POINT_BITS: i32 = 60;
/// Per-trajectory magnitudes at or above this are rejected (2⁶⁶).
pub const FIXED_POINT_LIMIT: f64 = 73_786_976_294_838_206_464.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BatchError {
    #[error("statistic {0} is not finite or exceeds the fixed-point range")]
    OutOfRange(f64),
    #[error("fixed-point accumulator overflow")]
    Overflow,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("batch holds no samples")]
    Empty,
}

pub fn to_fixed(x: f64) -> Result<i128, BatchError> {
    if !x.is_finite() || x.abs() >= FIXED_POINT_LIMIT {
        return Err(BatchError::OutOfRange(x));
    }
    Ok((x * 2f64.powi(FIXED_POINT_BITS)).round() as i128)
}

pub fn from_fixed(x: i128) -> f64 {
    x as f64 * 2f64.powi(-FIXED_POINT_BITS)
}

fn add_fixed(acc: &mut [i128], local: &[f64]) -> Result<(), BatchError> {
    for (a, v) in acc.iter_mut().zip(local) {
        *a = a.checked_add(to_fixed(*v)?).ok_or(BatchError::Overflow)?;
    }
    Ok(())
}

fn merge_fixed(acc: &mut [i128], other: &[i128]) -> Result<(), BatchError> {
    for (a, b) in acc.iter_mut().zip(other) {
        *a = a.checked_add(*b).ok_or(BatchError::Overflow)?;
    }
    Ok(())
}

pub fn triangle_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Expands a row-major upper triangle into a full symmetric matrix.
pub fn symmetric_from_upper(d: usize, upper: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = upper[k];
            m[(j, i)] = upper[k];
            k += 1;
        }
    }
    m
}

fn add_outer_upper(acc: &mut [f64], x: &[f64], weight: f64) {
    let mut k = 0;
    for (i, xi) in x.iter().enumerate() {
        let wi = weight * xi;
        let row = &mut acc[k..k + x.len() - i];
        if wi != 0.0 {
            for (a, xj) in row.iter_mut().zip(&x[i..]) {
                *a += wi * xj;
            }
        }
        k += x.len() - i;
    }
}

/// Discounting and the time normalization of the value features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub horizon: usize,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        Self {
            gamma: 0.995,
            lambda: 0.97,
            horizon: 500,
        }
    }
}

/// Exact sums over a set of trajectories.
///
/// Advantages enter unstandardized; the batch-wide standardization is applied
/// in [`BatchStats::finalize`] through `Σ score·Â`, `Σ score`, `ΣÂ` and `ΣÂ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub policy_dim: usize,
    pub value_dim: usize,
    pub sample_count: u64,
    pub trajectory_count: u64,
    pub early_terminations: u64,
    /// `Σ score · Â`.
    pub g_sum: Vec<i128>,
    /// `Σ score`.
    pub score_sum: Vec<i128>,
    pub adv_sum: i128,
    pub adv_sq_sum: i128,
    /// Upper triangle of `Σ score scoreᵀ`, row-major.
    pub fisher_sum: Vec<i128>,
    /// Upper triangle of the value-feature `XᵀX`, row-major.
    pub value_xtx: Vec<i128>,
    pub value_xty: Vec<i128>,
    /// Sum of undiscounted trajectory returns.
    pub return_sum: i128,
}

/// Normalized quantities for one policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Policy gradient with batch-standardized advantages.
    pub g: DVector<f64>,
    /// Undamped empirical Fisher matrix.
    pub fisher: DMatrix<f64>,
    pub value_neq: NormalEquations,
    pub mean_return: f64,
    pub advantage_mean: f64,
    pub advantage_std: f64,
    pub sample_count: u64,
    pub trajectory_count: u64,
    pub early_terminations: u64,
}

impl BatchStats {
    pub fn new(policy_dim: usize, value_dim: usize) -> Self {
        Self {
            policy_dim,
            value_dim,
            sample_count: 0,
            trajectory_count: 0,
            early_terminations: 0,
            g_sum: vec![0; policy_dim],
            score_sum: vec![0; policy_dim],
            adv_sum: 0,
            adv_sq_sum: 0,
            fisher_sum: vec![0; triangle_len(policy_dim)],
            value_xtx: vec![0; triangle_len(value_dim)],
            value_xty: vec![0; value_dim],
            return_sum: 0,
        }
    }

    pub fn for_policy(policy: &AffineGaussianPolicy) -> Self {
        Self::new(policy.dim(), value::feature_dim(policy.obs_dim()))
    }

    /// Adds one trajectory. Advantages come from GAE under `baseline`;
    /// value-regression targets are discounted returns-to-go.
    pub fn add_trajectory(
        &mut self,
        traj: &Trajectory,
        policy: &AffineGaussianPolicy,
        baseline: &ValueParams,
        cfg: &AdvantageConfig,
    ) -> Result<(), BatchError> {
        let d = policy.dim();
        if d != self.policy_dim {
            return Err(BatchError::DimensionMismatch {
                expected: self.policy_dim,
                got: d,
            });
        }
        let vd = value::feature_dim(policy.obs_dim());
        if vd != self.value_dim || baseline.weights.len() != vd {
            return Err(BatchError::DimensionMismatch {
                expected: self.value_dim,
                got: baseline.weights.len(),
            });
        }
        self.trajectory_count += 1;
        self.early_terminations += u64::from(traj.terminated_early);
        self.return_sum = self
            .return_sum
            .checked_add(to_fixed(traj.total_reward())?)
            .ok_or(BatchError::Overflow)?;
        let len = traj.len();
        if len == 0 {
            return Ok(());
        }

        let obs_dim = policy.obs_dim();
        let whitened: Vec<Vec<f64>> = traj
            .observations
            .iter()
            .map(|o| policy.normalizer.normalize(o.as_slice()))
            .collect();
        let mut x = vec![0.0; vd];
        let mut values = Vec::with_capacity(len + 1);
        for (t, z) in whitened.iter().enumerate() {
            value::features_into(z, t, cfg.horizon, &mut x);
            values.push(baseline.predict_features(&x));
        }
        let adv = value::gae(&traj.rewards, &values, cfg.gamma, cfg.lambda);
        let targets = value::returns_to_go(&traj.rewards, cfg.gamma);

        let mut g = vec![0.0; d];
        let mut s_sum = vec![0.0; d];
        let mut fisher = vec![0.0; triangle_len(d)];
        let mut xtx = vec![0.0; triangle_len(vd)];
        let mut xty = vec![0.0; vd];
        let (mut a_sum, mut a_sq) = (0.0, 0.0);
        let mut mean = vec![0.0; policy.act_dim()];
        let mut score = vec![0.0; d];
        for t in 0..len {
            let z = &whitened[t];
            debug_assert_eq!(z.len(), obs_dim);
            policy.mean_whitened_into(z, &mut mean);
            policy.score_whitened_into(z, &mean, &traj.actions[t], &mut score);
            let a = adv[t];
            for ((gi, si), sc) in g.iter_mut().zip(s_sum.iter_mut()).zip(&score) {
                *gi += sc * a;
                *si += sc;
            }
            add_outer_upper(&mut fisher, &score, 1.0);
            a_sum += a;
            a_sq += a * a;
            value::features_into(z, t, cfg.horizon, &mut x);
            add_outer_upper(&mut xtx, &x, 1.0);
            for (o, xi) in xty.iter_mut().zip(&x) {
                *o += xi * targets[t];
            }
        }
        add_fixed(&mut self.g_sum, &g)?;
        add_fixed(&mut self.score_sum, &s_sum)?;
        add_fixed(&mut self.fisher_sum, &fisher)?;
        add_fixed(&mut self.value_xtx, &xtx)?;
        add_fixed(&mut self.value_xty, &xty)?;
        self.adv_sum = self.adv_sum.checked_add(to_fixed(a_sum)?).ok_or(BatchError::Overflow)?;
        self.adv_sq_sum = self.adv_sq_sum.checked_add(to_fixed(a_sq)?).ok_or(BatchError::Overflow)?;
        self.sample_count += len as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &BatchStats) -> Result<(), BatchError> {
        if other.policy_dim != self.policy_dim {
            return Err(BatchError::DimensionMismatch {
                expected: self.policy_dim,
                got: other.policy_dim,
            });
        }
        if other.value_dim != self.value_dim {
            return Err(BatchError::DimensionMismatch {
                expected: self.value_dim,
                got: other.value_dim,
            });
        }
        self.sample_count += other.sample_count;
        self.trajectory_count += other.trajectory_count;
        self.early_terminations += other.early_terminations;
        merge_fixed(&mut self.g_sum, &other.g_sum)?;
        merge_fixed(&mut self.score_sum, &other.score_sum)?;
        merge_fixed(&mut self.fisher_sum, &other.fisher_sum)?;
        merge_fixed(&mut self.value_xtx, &other.value_xtx)?;
        merge_fixed(&mut self.value_xty, &other.value_xty)?;
        merge_fixed(
            std::slice::from_mut(&mut self.adv_sum),
            std::slice::from_ref(&other.adv_sum),
        )?;
        merge_fixed(
            std::slice::from_mut(&mut self.adv_sq_sum),
            std::slice::from_ref(&other.adv_sq_sum),
        )?;
        merge_fixed(
            std::slice::from_mut(&mut self.return_sum),
            std::slice::from_ref(&other.return_sum),
        )?;
        Ok(())
    }

    /// Gradient with standardized advantages `(Â − m)/s`, undamped Fisher,
    /// value normal equations and mean return.
    pub fn finalize(&self) -> Result<Aggregate, BatchError> {
        if self.sample_count == 0 {
            return Err(BatchError::Empty);
        }
        let n = self.sample_count as f64;
        let m = from_fixed(self.adv_sum) / n;
        let var = (from_fixed(self.adv_sq_sum) / n - m * m).max(0.0);
        let s = if var.sqrt() > 1e-12 {
            var.sqrt()
        } else {
            1.0
        };
        let g = DVector::from_iterator(
            self.policy_dim,
            self.g_sum
                .iter()
                .zip(&self.score_sum)
                .map(|(gs, ss)| (from_fixed(*gs) - m * from_fixed(*ss)) / (s * n)),
        );
        let upper: Vec<f64> = self.fisher_sum.iter().map(|v| from_fixed(*v) / n).collect();
        let fisher = symmetric_from_upper(self.policy_dim, &upper);

        let vd = self.value_dim;
        let upper: Vec<f64> = self.value_xtx.iter().map(|v| from_fixed(*v)).collect();
        let xtx = symmetric_from_upper(vd, &upper);
        let value_neq = NormalEquations {
            dim: vd,
            xtx: xtx.transpose().as_slice().to_vec(),
            xty: self.value_xty.iter().map(|v| from_fixed(*v)).collect(),
            count: self.sample_count,
        };
        Ok(Aggregate {
            g,
            fisher,
            value_neq,
            mean_return: from_fixed(self.return_sum) / self.trajectory_count as f64,
            advantage_mean: m,
            advantage_std: s,
            sample_count: self.sample_count,
            trajectory_count: self.trajectory_count,
            early_terminations: self.early_terminations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::npg::{self, Sample};
    use crate::policy::DEFAULT_INIT_LOG_STD;
    use crate::sim::ModelParams;
    use crate::task::{rollout, RestartPool, TaskConfig, ACT_DIM, OBS_DIM};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn policy_with_random_gains(seed: u64) -> AffineGaussianPolicy {
        let mut p = AffineGaussianPolicy::initial(OBS_DIM, ACT_DIM, DEFAULT_INIT_LOG_STD);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = p
            .params
            .flatten()
            .iter()
            .map(|v| v + 0.01 * rng.random_range(-1.0..1.0))
            .collect();
        p.params = crate::policy::PolicyParams::from_flat(OBS_DIM, ACT_DIM, &theta).unwrap();
        p
    }

    fn trajectories(n: usize, horizon: usize, policy: &AffineGaussianPolicy, seed: u64) -> Vec<Trajectory> {
        let cfg = TaskConfig {
            horizon,
            restart_prob: 0.0,
            ..TaskConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| rollout(policy, &ModelParams::default(), &cfg, &RestartPool::default(), &mut rng).unwrap())
            .collect()
    }

    fn random_baseline(dim: usize, seed: u64) -> ValueParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ValueParams {
            weights: (0..dim).map(|_| rng.random_range(-0.1..0.1)).collect(),
            ridge: value::DEFAULT_RIDGE,
        }
    }

    #[test]
    fn fixed_point_round_trip_and_range() {
        for x in [0.0, 1.0, -2.5, 1e-12, 12345.678] {
            assert!((from_fixed(to_fixed(x).unwrap()) - x).abs() <= 2f64.powi(-60));
        }
        assert!(matches!(to_fixed(f64::NAN), Err(BatchError::OutOfRange(_))));
        assert!(matches!(to_fixed(1e30), Err(BatchError::OutOfRange(_))));
    }

    #[test]
    fn matches_direct_estimators() {
        let policy = policy_with_random_gains(1);
        let trajs = trajectories(4, 30, &policy, 2);
        let baseline = random_baseline(value::feature_dim(OBS_DIM), 3);
        let cfg = AdvantageConfig {
            horizon: 30,
            ..AdvantageConfig::default()
        };
        let mut stats = BatchStats::for_policy(&policy);
        for t in &trajs {
            stats.add_trajectory(t, &policy, &baseline, &cfg).unwrap();
        }
        let agg = stats.finalize().unwrap();

        // oracle: explicit advantages, batch standardization, direct estimators
        let mut adv = Vec::new();
        let mut neq = NormalEquations::new(value::feature_dim(OBS_DIM));
        for t in &trajs {
            let z: Vec<Vec<f64>> = t.observations.iter().map(|o| policy.normalizer.normalize(&o.0)).collect();
            let v: Vec<f64> = z.iter().enumerate().map(|(i, zi)| baseline.predict(zi, i, 30)).collect();
            adv.extend(value::gae(&t.rewards, &v, cfg.gamma, cfg.lambda));
            for (i, y) in value::returns_to_go(&t.rewards, cfg.gamma).iter().enumerate() {
                neq.add_sample(&value::features(&z[i], i, 30), *y);
            }
        }
        value::standardize(&mut adv);
        let pairs: Vec<(&[f64], &[f64])> = trajs
            .iter()
            .flat_map(|t| t.observations.iter().zip(&t.actions).map(|(o, a)| (&o.0[..], &a[..])))
            .collect();
        let g = npg::policy_gradient(
            &policy,
            pairs.iter().zip(&adv).map(|((o, a), adv)| Sample {
                obs: o,
                action: a,
                advantage: *adv,
            }),
        );
        let f = npg::fisher(&policy, pairs.iter().copied()).unwrap();
        assert_eq!(agg.sample_count, 120);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        for (a, b) in agg.g.iter().zip(g.g.iter()) {
            assert!(rel(*a, *b) < 1e-10, "{a} {b}");
        }
        let damped = npg::damp(agg.fisher.clone());
        for (a, b) in damped.iter().zip(f.f.iter()) {
            assert!(rel(*a, *b) < 1e-10, "{a} {b}");
        }
        for (a, b) in agg.value_neq.xtx.iter().zip(&neq.xtx) {
            assert!(rel(*a, *b) < 1e-10);
        }
        for (a, b) in agg.value_neq.xty.iter().zip(&neq.xty) {
            assert!(rel(*a, *b) < 1e-10);
        }
        let mean_ret = trajs.iter().map(Trajectory::total_reward).sum::<f64>() / 4.0;
        assert!(rel(agg.mean_return, mean_ret) < 1e-12);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let policy = AffineGaussianPolicy::initial(OBS_DIM, ACT_DIM, DEFAULT_INIT_LOG_STD);
        assert_eq!(BatchStats::for_policy(&policy).finalize(), Err(BatchError::Empty));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn any_partition_merges_to_identical_bits(cuts in prop::collection::vec(0usize..12, 0..4), order_seed in any::<u64>()) {
            let policy = policy_with_random_gains(4);
            let trajs = trajectories(12, 10, &policy, 5);
            let baseline = random_baseline(value::feature_dim(OBS_DIM), 6);
            let cfg = AdvantageConfig { horizon: 10, ..AdvantageConfig::default() };
            let mut whole = BatchStats::for_policy(&policy);
            for t in &trajs {
                whole.add_trajectory(t, &policy, &baseline, &cfg).unwrap();
            }
            let mut bounds = cuts.clone();
            bounds.push(0);
            bounds.push(12);
            bounds.sort();
            let mut parts: Vec<BatchStats> = bounds
                .windows(2)
                .map(|w| {
                    let mut s = BatchStats::for_policy(&policy);
                    for t in &trajs[w[0]..w[1]] {
                        s.add_trajectory(t, &policy, &baseline, &cfg).unwrap();
                    }
                    s
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
            for i in (1..parts.len()).rev() {
                parts.swap(i, rng.random_range(0..=i));
            }
            let mut merged = BatchStats::for_policy(&policy);
            for p in &parts {
                merged.merge(p).unwrap();
            }
            prop_assert_eq!(&merged, &whole);
            prop_assert_eq!(merged.finalize().unwrap(), whole.finalize().unwrap());
        }
    }
}
