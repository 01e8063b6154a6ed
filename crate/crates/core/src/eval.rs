//! Spiral-tracking evaluation and policy-weight export.

use std::fmt::Write as _;
use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::Rng;

use crate::policy::AffineGaussianPolicy;
use crate::sim::{ModelParams, SimError, SimState, CONTROL_DT};
use crate::task::{home_pose, PushEnv, ACT_DIM, ACT_NAMES, OBS_NAMES};

pub const PATH_DURATION: f64 = 4.0;
pub const SPIRAL_DURATION: f64 = 2.0;
pub const PATH_RADIUS: f64 = 0.04;

/// Goal position at time `t` (s), clamped to `[0, 4]`.
///
/// Two counterclockwise turns while the radius grows linearly to 4 cm, then
/// one turn on the 4 cm circle.
pub fn goal_path(t: f64) -> Vector2<f64> {
    let t = t.clamp(0.0, PATH_DURATION);
    let (r, angle) = if t <= SPIRAL_DURATION {
        (PATH_RADIUS * t / SPIRAL_DURATION, 2.0 * PI * t)
    } else {
        (PATH_RADIUS, 4.0 * PI + PI * (t - SPIRAL_DURATION))
    };
    Vector2::new(r * angle.cos(), r * angle.sin())
}

/// Control steps in one evaluation rollout.
pub fn eval_steps() -> usize {
    (PATH_DURATION / CONTROL_DT).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRollout {
    pub object: Vec<Vector2<f64>>,
    pub goal: Vec<Vector2<f64>>,
    pub distance: Vec<f64>,
    /// Set when the simulator blew up; the series stop at the failure.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub rollouts: Vec<EvalRollout>,
    /// Average per-step distance over every recorded step of every rollout.
    pub mean_distance: f64,
    pub failed_rollouts: usize,
}

impl EvalResult {
    pub fn from_rollouts(rollouts: Vec<EvalRollout>) -> Self {
        let (sum, count) = rollouts
            .iter()
            .flat_map(|r| &r.distance)
            .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
        let failed_rollouts = rollouts.iter().filter(|r| r.failed).count();
        Self {
            rollouts,
            mean_distance: if count == 0 { f64::NAN } else { sum / count as f64 },
            failed_rollouts,
        }
    }

    /// One row per step: `rollout,step,time,obj_x,obj_y,goal_x,goal_y,distance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rollout,step,time,obj_x,obj_y,goal_x,goal_y,distance\n");
        for (i, r) in self.rollouts.iter().enumerate() {
            for k in 0..r.distance.len() {
                let t = (k + 1) as f64 * CONTROL_DT;
                let _ = writeln!(
                    out,
                    "{i},{k},{t:?},{:?},{:?},{:?},{:?},{:?}",
                    r.object[k].x, r.object[k].y, r.goal[k].x, r.goal[k].y, r.distance[k]
                );
            }
        }
        out
    }
}

/// How actions are drawn during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActionMode {
    #[default]
    Stochastic,
    Mean,
}

/// Runs one spiral-tracking episode from the home pose.
///
/// At control step `k` the policy sees the goal at `t_k`; the distance is
/// measured after the step against the goal at `t_{k+1}`.
pub fn track_once<R: Rng + ?Sized>(
    policy: &AffineGaussianPolicy,
    model: &ModelParams,
    mode: ActionMode,
    rng: &mut R,
) -> EvalRollout {
    let steps = eval_steps();
    let mut env = PushEnv::new(model.clone(), SimState::at_rest(home_pose(model)), goal_path(0.0));
    let mut out = EvalRollout {
        object: Vec::with_capacity(steps),
        goal: Vec::with_capacity(steps),
        distance: Vec::with_capacity(steps),
        failed: false,
    };
    for k in 0..steps {
        env.goal = goal_path(k as f64 * CONTROL_DT);
        let obs = env.observe();
        let action = match mode {
            ActionMode::Stochastic => policy.act(obs.as_slice(), rng).0,
            ActionMode::Mean => policy.mean(obs.as_slice()),
        };
        let action: [f64; ACT_DIM] = action.try_into().expect("policy action dimension");
        match env.advance(&action) {
            Ok(_) => {}
            Err(SimError::NonFiniteState { .. }) => {
                out.failed = true;
                break;
            }
            Err(e) => unreachable!("fixed physics step rejected: {e}"),
        }
        let goal = goal_path((k + 1) as f64 * CONTROL_DT);
        out.object.push(env.state.obj_pos);
        out.goal.push(goal);
        out.distance.push((env.state.obj_pos - goal).norm());
    }
    out
}

/// Sequential evaluation over `n_rollouts` episodes.
pub fn evaluate<R: Rng + ?Sized>(
    policy: &AffineGaussianPolicy,
    model: &ModelParams,
    n_rollouts: usize,
    mode: ActionMode,
    rng: &mut R,
) -> EvalResult {
    assert!(n_rollouts >= 1, "evaluation needs at least one rollout");
    EvalResult::from_rollouts((0..n_rollouts).map(|_| track_once(policy, model, mode, rng)).collect())
}

/// `W | b | log_std` as CSV with action rows and observation-name columns.
pub fn dump_policy_weights(policy: &AffineGaussianPolicy) -> String {
    let p = &policy.params;
    let mut out = String::from("action");
    for name in OBS_NAMES.iter().take(p.obs_dim()) {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",bias,log_std\n");
    for j in 0..p.act_dim() {
        out.push_str(ACT_NAMES.get(j).copied().unwrap_or("a"));
        for i in 0..p.obs_dim() {
            let _ = write!(out, ",{:?}", p.weight(j, i));
        }
        let _ = writeln!(out, ",{:?},{:?}", p.bias()[j], p.log_std()[j]);
    }
    out
}
