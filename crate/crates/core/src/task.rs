//! The pushing task as an episodic MDP: observations, reward, start-state
//! distribution, rollouts and per-rollout model randomization.

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::policy::AffineGaussianPolicy;
use crate::sim::{
    self, forward_kinematics, ModelParams, SimError, SimState, NUM_FINGERS, NUM_JOINTS, PHYSICS_DT,
    SUBSTEPS_PER_CONTROL,
};

/// Observation layout: `q (6) | qdot (6) | object xy (2) | goal xy (2)`.
pub const OBS_DIM: usize = 16;
pub const ACT_DIM: usize = NUM_JOINTS;
pub const OBS_Q: usize = 0;
pub const OBS_QDOT: usize = 6;
pub const OBS_OBJECT: usize = 12;
pub const OBS_GOAL: usize = 14;

/// Human-readable names of the observation channels, in order.
pub const OBS_NAMES: [&str; OBS_DIM] = [
    "q0_1", "q0_2", "q1_1", "q1_2", "q2_1", "q2_2", "qd0_1", "qd0_2", "qd1_1", "qd1_2", "qd2_1", "qd2_2",
    "obj_x", "obj_y", "goal_x", "goal_y",
];
pub const ACT_NAMES: [&str; ACT_DIM] = ["tau0_1", "tau0_2", "tau1_1", "tau1_2", "tau2_1", "tau2_2"];

/// Sampled model masses are clamped to at least this value (kg).
/// Smallest whitening scale per observation channel: 0.1 rad for joint
/// angles, 0.5 rad/s for joint velocities and 2 cm for positions. Fresh
/// starts keep the object at the origin, so its calibration spread is
/// otherwise only the few millimetres of accidental bumps.
pub const OBS_STD_FLOOR: [f64; OBS_DIM] = [
    0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.02, 0.02, 0.02, 0.02,
];

pub const MIN_SAMPLED_MASS: f64 = 0.05;
/// Attempts at drawing a contact-free start configuration.
pub const RESET_ATTEMPTS: usize = 100;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TaskError {
    #[error("could not draw a contact-free start configuration in {RESET_ATTEMPTS} attempts")]
    ResetFailed,
    #[error("invalid task configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn new(state: &SimState, goal: Vector2<f64>) -> Self {
        let mut v = [0.0; OBS_DIM];
        v[OBS_Q..OBS_Q + 6].copy_from_slice(&state.q);
        v[OBS_QDOT..OBS_QDOT + 6].copy_from_slice(&state.qdot);
        v[OBS_OBJECT] = state.obj_pos.x;
        v[OBS_OBJECT + 1] = state.obj_pos.y;
        v[OBS_GOAL] = goal.x;
        v[OBS_GOAL + 1] = goal.y;
        Self(v)
    }

    pub fn q(&self) -> [f64; NUM_JOINTS] {
        let mut q = [0.0; NUM_JOINTS];
        q.copy_from_slice(&self.0[OBS_Q..OBS_Q + 6]);
        q
    }

    pub fn object(&self) -> Vector2<f64> {
        Vector2::new(self.0[OBS_OBJECT], self.0[OBS_OBJECT + 1])
    }

    pub fn goal(&self) -> Vector2<f64> {
        Vector2::new(self.0[OBS_GOAL], self.0[OBS_GOAL + 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Coefficients of `1 − c_goal‖O−G‖ − c_tip Σ‖f_i−O‖ − c_ctrl‖a‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub goal: f64,
    pub fingertip: f64,
    pub control: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            goal: 3.0,
            fingertip: 1.0,
            control: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn reward(&self, obs: &Observation, action: &[f64], params: &ModelParams) -> f64 {
        let object = obs.object();
        let tips = forward_kinematics(&obs.q(), params);
        let tip_cost: f64 = tips.iter().map(|f| (f - object).norm()).sum();
        let effort: f64 = action.iter().map(|a| a * a).sum();
        1.0 - self.goal * (object - obs.goal()).norm() - self.fingertip * tip_cost - self.control * effort
    }
}

/// Per-step reward with the default coefficients.
pub fn reward(obs: &Observation, action: &[f64], params: &ModelParams) -> f64 {
    RewardWeights::default().reward(obs, action, params)
}

/// Model randomization applied before each training rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub mass_mean: f64,
    pub mass_std: f64,
    pub base_pos_std: f64,
}

impl EnsembleConfig {
    pub fn fixed(mass: f64) -> Self {
        Self {
            mass_mean: mass,
            mass_std: 0.0,
            base_pos_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.mass_mean > 0.0) || !(self.mass_std >= 0.0) || !(self.base_pos_std >= 0.0) {
            return Err(TaskError::InvalidConfig(format!("bad ensemble settings {self:?}")));
        }
        Ok(())
    }
}

/// Draws one ensemble member: Gaussian object mass (clamped) and independent
/// Gaussian offsets of each finger base. Everything else is copied.
pub fn sample_model<R: Rng + ?Sized>(nominal: &ModelParams, cfg: &EnsembleConfig, rng: &mut R) -> ModelParams {
    let mut model = nominal.clone();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    model.object_mass = (cfg.mass_mean + cfg.mass_std * unit.sample(rng)).max(MIN_SAMPLED_MASS);
    for pose in &mut model.base_poses {
        pose.position.x += cfg.base_pos_std * unit.sample(rng);
        pose.position.y += cfg.base_pos_std * unit.sample(rng);
    }
    model
}

/// Joint ranges for fresh starts and the canonical evaluation pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub proximal: (f64, f64),
    pub distal: (f64, f64),
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            proximal: (0.7, 1.7),
            distal: (-2.9, -1.6),
        }
    }
}

/// Joint angles that put every fingertip `distance` from the origin, elbow
/// bent clockwise (negative distal angle).
pub fn pose_with_tip_distance(params: &ModelParams, distance: f64) -> [f64; NUM_JOINTS] {
    let mut q = [0.0; NUM_JOINTS];
    for f in 0..NUM_FINGERS {
        let base = params.base_poses[f];
        let [l1, l2] = params.link_lengths[f];
        let reach = (base.position.norm() - distance).clamp((l1 - l2).abs() + 1e-9, l1 + l2 - 1e-9);
        let elbow = ((reach * reach - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0).acos();
        // angle of the base-to-origin ray relative to the base orientation
        let raw = (-base.position.y).atan2(-base.position.x) - base.orientation;
        let to_origin = raw.sin().atan2(raw.cos());
        q[2 * f] = to_origin + (l2 * elbow.sin()).atan2(l1 + l2 * elbow.cos());
        q[2 * f + 1] = -elbow;
    }
    q
}

/// Canonical evaluation pose: every fingertip 10 cm from the origin.
pub fn home_pose(params: &ModelParams) -> [f64; NUM_JOINTS] {
    pose_with_tip_distance(params, HOME_TIP_DISTANCE)
}

pub const HOME_TIP_DISTANCE: f64 = 0.10;

/// Task settings shared by training rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub horizon: usize,
    pub restart_prob: f64,
    pub goal_radius: f64,
    pub joint_limits: JointLimits,
    pub reward: RewardWeights,
    pub ensemble: EnsembleConfig,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            horizon: 500,
            restart_prob: 0.3,
            goal_radius: 0.06,
            joint_limits: JointLimits::default(),
            reward: RewardWeights::default(),
            ensemble: EnsembleConfig::fixed(0.34),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.horizon == 0 {
            return Err(TaskError::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.restart_prob) {
            return Err(TaskError::InvalidConfig("restart_prob must lie in [0, 1]".into()));
        }
        if !(self.goal_radius >= 0.0) {
            return Err(TaskError::InvalidConfig("goal_radius must be >= 0".into()));
        }
        self.ensemble.validate()
    }
}

/// One episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T + 1` observations.
    pub observations: Vec<Observation>,
    /// `T` actions.
    pub actions: Vec<[f64; ACT_DIM]>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Simulator state behind each observation, kept for restarts.
    pub states: Vec<SimState>,
    pub goal: Vector2<f64>,
    /// Object mass of the model this episode ran on.
    pub object_mass: f64,
    pub terminated_early: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// States from the previous iteration's high-return trajectories.
#[derive(Debug, Clone, Default)]
pub struct RestartPool {
    trajectories: Vec<Vec<SimState>>,
}

impl RestartPool {
    /// Keeps the trajectories whose return is in the top quartile.
    pub fn from_trajectories(trajs: &[Trajectory]) -> Self {
        if trajs.is_empty() {
            return Self::default();
        }
        let mut returns: Vec<f64> = trajs.iter().map(Trajectory::total_reward).collect();
        returns.sort_by(f64::total_cmp);
        let cutoff = returns[(3 * returns.len()) / 4];
        let trajectories = trajs
            .iter()
            .filter(|t| !t.terminated_early && t.total_reward() >= cutoff)
            .map(|t| t.states.clone())
            .collect();
        Self { trajectories }
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SimState {
        let traj = &self.trajectories[rng.random_range(0..self.trajectories.len())];
        let mut state = traj[rng.random_range(0..traj.len())];
        state.t = 0.0;
        state
    }
}

/// Uniform sample from the disk of radius `radius` centered at the origin.
pub fn sample_goal<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Vector2<f64> {
    let r = radius * rng.random::<f64>().sqrt();
    let angle = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    Vector2::new(r * angle.cos(), r * angle.sin())
}

fn tips_clear(q: &[f64; NUM_JOINTS], obj: Vector2<f64>, params: &ModelParams) -> bool {
    let contact = params.fingertip_radius + params.object_radius;
    forward_kinematics(q, params).iter().all(|tip| (tip - obj).norm() > contact)
}

/// Draws a start state and a fresh goal.
///
/// With probability `restart_prob` (and a non-empty pool) the start state is a
/// recorded state from the pool; otherwise joints are uniform within the
/// limits, at rest, with the object at the origin and no fingertip touching it.
pub fn reset<R: Rng + ?Sized>(
    rng: &mut R,
    pool: &RestartPool,
    cfg: &TaskConfig,
    params: &ModelParams,
) -> Result<(SimState, Vector2<f64>), TaskError> {
    let restart = rng.random::<f64>() < cfg.restart_prob;
    let state = if restart && !pool.is_empty() {
        pool.draw(rng)
    } else {
        fresh_state(rng, &cfg.joint_limits, params)?
    };
    Ok((state, sample_goal(cfg.goal_radius, rng)))
}

fn fresh_state<R: Rng + ?Sized>(
    rng: &mut R,
    limits: &JointLimits,
    params: &ModelParams,
) -> Result<SimState, TaskError> {
    for _ in 0..RESET_ATTEMPTS {
        let mut q = [0.0; NUM_JOINTS];
        for f in 0..NUM_FINGERS {
            q[2 * f] = rng.random_range(limits.proximal.0..=limits.proximal.1);
            q[2 * f + 1] = rng.random_range(limits.distal.0..=limits.distal.1);
        }
        if tips_clear(&q, Vector2::zeros(), params) {
            return Ok(SimState::at_rest(q));
        }
    }
    Err(TaskError::ResetFailed)
}

/// Simulator plus goal, advanced one control step at a time.
#[derive(Debug, Clone)]
pub struct PushEnv {
    pub model: ModelParams,
    pub state: SimState,
    pub goal: Vector2<f64>,
    pub reward: RewardWeights,
}

impl PushEnv {
    pub fn new(model: ModelParams, state: SimState, goal: Vector2<f64>) -> Self {
        Self {
            model,
            state,
            goal,
            reward: RewardWeights::default(),
        }
    }

    pub fn observe(&self) -> Observation {
        Observation::new(&self.state, self.goal)
    }

    /// Holds `action` for one control period and returns the reward of the
    /// resulting state.
    pub fn advance(&mut self, action: &[f64; ACT_DIM]) -> Result<f64, SimError> {
        let mut state = self.state;
        for _ in 0..SUBSTEPS_PER_CONTROL {
            state = sim::step(&state, action, &self.model, PHYSICS_DT)?;
        }
        self.state = state;
        Ok(self.reward.reward(&self.observe(), action, &self.model))
    }
}

/// Runs the stochastic policy for up to `cfg.horizon` control steps.
///
/// A simulator blow-up ends the episode early with `terminated_early` set;
/// the failing step is not recorded.
pub fn rollout<R: Rng + ?Sized>(
    policy: &AffineGaussianPolicy,
    model: &ModelParams,
    cfg: &TaskConfig,
    pool: &RestartPool,
    rng: &mut R,
) -> Result<Trajectory, TaskError> {
    let (state, goal) = reset(rng, pool, cfg, model)?;
    let mut env = PushEnv::new(model.clone(), state, goal);
    env.reward = cfg.reward;
    let t = cfg.horizon;
    let mut traj = Trajectory {
        observations: Vec::with_capacity(t + 1),
        actions: Vec::with_capacity(t),
        rewards: Vec::with_capacity(t),
        log_probs: Vec::with_capacity(t),
        states: Vec::with_capacity(t + 1),
        goal,
        object_mass: model.object_mass,
        terminated_early: false,
    };
    traj.observations.push(env.observe());
    traj.states.push(env.state);
    for _ in 0..t {
        let obs = traj.observations.last().expect("non-empty");
        let (action, log_prob) = policy.act(obs.as_slice(), rng);
        let action: [f64; ACT_DIM] = action.try_into().expect("policy action dimension");
        match env.advance(&action) {
            Ok(r) => {
                traj.actions.push(action);
                traj.rewards.push(r);
                traj.log_probs.push(log_prob);
                traj.observations.push(env.observe());
                traj.states.push(env.state);
            }
            Err(SimError::NonFiniteState { .. }) => {
                traj.terminated_early = true;
                break;
            }
            Err(e) => unreachable!("fixed physics step rejected: {e}"),
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::AffineGaussianPolicy;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs_with(q: [f64; 6], object: Vector2<f64>, goal: Vector2<f64>) -> Observation {
        let mut s = SimState::at_rest(q);
        s.obj_pos = object;
        Observation::new(&s, goal)
    }

    #[test]
    fn pose_with_tip_distance_places_tips() {
        let p = ModelParams::default();
        for d in [0.0, 0.05, 0.10] {
            for tip in forward_kinematics(&pose_with_tip_distance(&p, d), &p) {
                assert!((tip.norm() - d).abs() < 1e-12, "{d} {tip:?}");
            }
        }
    }

    #[test]
    fn home_pose_lies_within_reset_limits() {
        let p = ModelParams::default();
        let lim = JointLimits::default();
        let q = home_pose(&p);
        for f in 0..NUM_FINGERS {
            assert!((lim.proximal.0..=lim.proximal.1).contains(&q[2 * f]), "{q:?}");
            assert!((lim.distal.0..=lim.distal.1).contains(&q[2 * f + 1]), "{q:?}");
        }
    }

    #[test]
    fn reward_direct_evaluation() {
        let p = ModelParams::default();
        let obs = obs_with(home_pose(&p), Vector2::zeros(), Vector2::new(0.03, 0.04));
        assert!((reward(&obs, &[0.0; 6], &p) - 0.55).abs() < 1e-12);

        let obs = obs_with(pose_with_tip_distance(&p, 0.0), Vector2::zeros(), Vector2::zeros());
        assert!((reward(&obs, &[0.0; 6], &p) - 1.0).abs() < 1e-12);
        assert!((reward(&obs, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0], &p) - 0.9).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn reward_bounded_and_decreasing_in_goal_distance(
            q in prop::array::uniform6(-3.0f64..3.0),
            ox in -0.1f64..0.1, oy in -0.1f64..0.1,
            dir in 0.0f64..6.3, d in 0.0f64..0.2, extra in 1e-6f64..0.1,
            a in prop::array::uniform6(-2.0f64..2.0),
        ) {
            let p = ModelParams::default();
            let o = Vector2::new(ox, oy);
            let u = Vector2::new(dir.cos(), dir.sin());
            let near = reward(&obs_with(q, o, o + u * d), &a, &p);
            let far = reward(&obs_with(q, o, o + u * (d + extra)), &a, &p);
            prop_assert!(near <= 1.0);
            prop_assert!(far < near);
        }
    }

    #[test]
    fn fresh_resets_start_at_origin_without_contact() {
        let p = ModelParams::default();
        let cfg = TaskConfig {
            restart_prob: 0.0,
            ..TaskConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (s, goal) = reset(&mut rng, &RestartPool::default(), &cfg, &p).unwrap();
            assert_eq!(s.obj_pos, Vector2::zeros());
            assert_eq!(s.qdot, [0.0; 6]);
            assert!(tips_clear(&s.q, s.obj_pos, &p));
            assert!(goal.norm() <= 0.06);
        }
    }

    #[test]
    fn impossible_geometry_fails_reset() {
        let mut p = ModelParams::default();
        p.object_radius = 1.0;
        let cfg = TaskConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            reset(&mut rng, &RestartPool::default(), &cfg, &p),
            Err(TaskError::ResetFailed)
        );
    }

    fn sample_trajectories(n: usize, horizon: usize) -> Vec<Trajectory> {
        let p = ModelParams::default();
        let cfg = TaskConfig {
            horizon,
            restart_prob: 0.0,
            ..TaskConfig::default()
        };
        let policy = AffineGaussianPolicy::initial(OBS_DIM, ACT_DIM, crate::policy::DEFAULT_INIT_LOG_STD);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..n)
            .map(|_| rollout(&policy, &p, &cfg, &RestartPool::default(), &mut rng).unwrap())
            .collect()
    }

    #[test]
    fn restarts_reuse_pool_states_with_fresh_goals() {
        let trajs = sample_trajectories(8, 5);
        let pool = RestartPool::from_trajectories(&trajs);
        assert!(!pool.is_empty() && pool.len() <= 8);
        let cfg = TaskConfig {
            restart_prob: 1.0,
            ..TaskConfig::default()
        };
        let p = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1000;
        let (mut pool_gx, mut new_gx) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let (s, goal) = reset(&mut rng, &pool, &cfg, &p).unwrap();
            let source = trajs
                .iter()
                .find(|t| t.states.iter().any(|r| r.q == s.q && r.obj_pos == s.obj_pos && r.qdot == s.qdot))
                .expect("restart state comes from a recorded trajectory");
            assert_eq!(s.t, 0.0);
            pool_gx.push(source.goal.x);
            new_gx.push(goal.x);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&pool_gx), mean(&new_gx));
        let cov: f64 = pool_gx.iter().zip(&new_gx).map(|(a, b)| (a - ma) * (b - mb)).sum();
        let va: f64 = pool_gx.iter().map(|a| (a - ma).powi(2)).sum();
        let vb: f64 = new_gx.iter().map(|b| (b - mb).powi(2)).sum();
        // a constant pool-goal column would give an undefined correlation
        if va > 0.0 {
            let corr = cov / (va * vb).sqrt();
            assert!(corr.abs() < 0.1, "{corr}");
        }
    }

    #[test]
    fn empty_pool_falls_back_to_fresh_state() {
        let cfg = TaskConfig {
            restart_prob: 1.0,
            ..TaskConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (s, _) = reset(&mut rng, &RestartPool::default(), &cfg, &ModelParams::default()).unwrap();
        assert_eq!(s.obj_pos, Vector2::zeros());
        assert_eq!(s.qdot, [0.0; 6]);
    }

    #[test]
    fn rollout_lengths() {
        let t = &sample_trajectories(1, 1)[0];
        assert_eq!((t.actions.len(), t.rewards.len(), t.observations.len()), (1, 1, 2));
        let t = &sample_trajectories(1, 30)[0];
        assert_eq!(t.log_probs.len(), 30);
        assert_eq!(t.states.len(), 31);
        assert!(!t.terminated_early);
        assert!(t.rewards.iter().all(|r| *r <= 1.0));
    }

    #[test]
    fn rollouts_are_deterministic_given_seed() {
        assert_eq!(sample_trajectories(2, 20), sample_trajectories(2, 20));
    }

    #[test]
    fn random_policy_return_is_finite_and_below_horizon() {
        let trajs = sample_trajectories(100, 20);
        let mean = trajs.iter().map(Trajectory::total_reward).sum::<f64>() / 100.0;
        assert!(mean.is_finite() && mean < 20.0);
    }

    #[test]
    fn goal_disk_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut max_r: f64 = 0.0;
        let mut sum_r = 0.0;
        for _ in 0..n {
            let r = sample_goal(0.06, &mut rng).norm();
            max_r = max_r.max(r);
            sum_r += r;
        }
        assert!(max_r <= 0.06);
        // E[r] = 2R/3 for a uniform disk
        assert!((sum_r / n as f64 - 0.04).abs() < 0.001);
    }

    #[test]
    fn degenerate_ensemble_only_substitutes_mass() {
        let p = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = sample_model(&p, &EnsembleConfig::fixed(0.4), &mut rng);
        let mut expected = p.clone();
        expected.object_mass = 0.4;
        assert_eq!(m, expected);
    }

    #[test]
    fn ensemble_sample_moments() {
        let p = ModelParams::default();
        let cfg = EnsembleConfig {
            mass_mean: 0.4,
            mass_std: 0.03,
            base_pos_std: 0.005,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 10_000;
        let mut mass = 0.0;
        let mut dx = Vec::with_capacity(n);
        let mut dy = Vec::with_capacity(n);
        for _ in 0..n {
            let m = sample_model(&p, &cfg, &mut rng);
            assert!(m.object_mass >= MIN_SAMPLED_MASS);
            mass += m.object_mass;
            dx.push(m.base_poses[1].position.x - p.base_poses[1].position.x);
            dy.push(m.base_poses[1].position.y - p.base_poses[1].position.y);
        }
        assert!((mass / n as f64 - 0.4).abs() < 0.001);
        for d in [dx, dy] {
            let mean = d.iter().sum::<f64>() / n as f64;
            let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            assert!((std - 0.005).abs() < 0.05 * 0.005, "{std}");
        }
    }
}
