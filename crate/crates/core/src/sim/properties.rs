//! Seeded physical-consistency checks of the simulator, shared by the test
//! suites and the `inspect` command.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::contact::contact_forces;
use super::dynamics::{step, SimError};
use super::params::{ModelParams, NUM_JOINTS};
use super::state::SimState;
use super::{PHYSICS_DT, SUBSTEPS_PER_CONTROL};
use crate::sysid::PushScript;
use crate::task::{pose_with_tip_distance, reward, Observation};

/// Largest tolerated penetration for torques bounded by 1 N·m.
pub const MAX_PENETRATION: f64 = 5e-3;
/// Slack allowed on the friction cone.
pub const CONE_SLACK: f64 = 1e-9;
/// Control steps in a short randomized rollout.
pub const SHORT_ROLLOUT_STEPS: usize = 50;

/// Torque source of a randomized rollout.
#[derive(Debug, Clone, Copy)]
enum Drive {
    /// Uniform torques in `[-1, 1]`, redrawn every control step.
    Random,
    /// Saturated pushing script (presses and slides on the disk).
    Push(PushScript),
}

/// A randomized rollout: perturbed parameters, start state and torque source.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ModelParams,
    pub start: SimState,
    pub goal: Vector2<f64>,
    drive: Drive,
    seed: u64,
}

impl Scenario {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::default();
        params.object_mass = rng.random_range(0.2..0.6);
        params.contact_friction_mu = rng.random_range(0.2..1.2);
        // Start clear of the disk, as resets do.
        let mut start = loop {
            let tip_distance = rng.random_range(0.07..0.12);
            let mut s = SimState::at_rest(pose_with_tip_distance(&params, tip_distance));
            for q in &mut s.q {
                *q += rng.random_range(-0.1..0.1);
            }
            if contact_forces(&s, &params).is_empty() {
                break s;
            }
        };
        start.obj_vel = Vector2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let drive = if rng.random::<bool>() {
            Drive::Random
        } else {
            Drive::Push(PushScript {
                stiffness: rng.random_range(200.0..2000.0),
                press: rng.random_range(0.0..0.01),
                sweep_amp: rng.random_range(0.0..0.05),
                max_torque: 1.0,
                ..PushScript::default()
            })
        };
        let goal = Vector2::new(rng.random_range(-0.06..0.06), rng.random_range(-0.06..0.06));
        Self {
            params,
            start,
            goal,
            drive,
            seed,
        }
    }

    /// Simulates `control_steps` control periods and calls `visit` after every
    /// physics step with the new state and the torques that produced it.
    pub fn simulate(
        &self,
        control_steps: usize,
        mut visit: impl FnMut(&SimState, &[f64; NUM_JOINTS]),
    ) -> Result<SimState, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let mut state = self.start;
        for _ in 0..control_steps {
            let held: [f64; NUM_JOINTS] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            for _ in 0..SUBSTEPS_PER_CONTROL {
                let tau = match self.drive {
                    Drive::Random => held,
                    Drive::Push(script) => script.torques(&state, &self.params),
                };
                state = step(&state, &tau, &self.params, PHYSICS_DT)?;
                visit(&state, &tau);
            }
        }
        Ok(state)
    }

    /// The same scenario with bases, object and goal shifted by `offset`.
    pub fn translated(&self, offset: Vector2<f64>) -> Self {
        let mut out = self.clone();
        for pose in &mut out.params.base_poses {
            pose.position += offset;
        }
        out.start.obj_pos += offset;
        out.goal += offset;
        out
    }
}

/// Worst values seen along a rollout.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ContactStats {
    pub max_penetration: f64,
    /// Largest `|tangent| - μ·normal` (non-positive when inside the cone).
    pub max_cone_excess: f64,
    pub contact_samples: usize,
}

/// Friction cone and penetration bound along one rollout.
pub fn check_contacts(scenario: &Scenario, control_steps: usize) -> Result<ContactStats, String> {
    let mut stats = ContactStats {
        max_cone_excess: f64::NEG_INFINITY,
        ..ContactStats::default()
    };
    let mut failure = None;
    let params = &scenario.params;
    scenario
        .simulate(control_steps, |state, _| {
            for c in contact_forces(state, params) {
                stats.contact_samples += 1;
                stats.max_penetration = stats.max_penetration.max(c.penetration);
                let excess = c.tangent_force.abs() - params.contact_friction_mu * c.normal_force;
                stats.max_cone_excess = stats.max_cone_excess.max(excess);
                if failure.is_none() && (c.normal_force < 0.0 || excess > CONE_SLACK) {
                    failure = Some(format!("contact outside friction cone at t = {}: {c:?}", state.t));
                }
            }
        })
        .map_err(|e| e.to_string())?;
    if let Some(f) = failure {
        return Err(f);
    }
    if stats.max_penetration > MAX_PENETRATION {
        return Err(format!("penetration {:.4} m exceeds bound", stats.max_penetration));
    }
    Ok(stats)
}

/// With zero torques and no contact, the object's kinetic energy never grows.
pub fn check_passivity(seed: u64, steps: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::default();
    params.object_mass = rng.random_range(0.1..1.0);
    params.ground_coulomb_decel = rng.random_range(0.0..5.0);
    params.ground_viscous = rng.random_range(0.0..5.0);
    // Fingers folded far away from any place the object can reach.
    let mut state = SimState::at_rest(pose_with_tip_distance(&params, 0.19));
    let speed = rng.random_range(0.0..0.3);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    state.obj_vel = Vector2::new(speed * angle.cos(), speed * angle.sin());
    let energy = |s: &SimState| 0.5 * params.object_mass * s.obj_vel.norm_squared();
    let mut previous = energy(&state);
    for _ in 0..steps {
        state = step(&state, &[0.0; NUM_JOINTS], &params, PHYSICS_DT).map_err(|e| e.to_string())?;
        if !contact_forces(&state, &params).is_empty() {
            return Err(format!("unexpected contact at t = {}", state.t));
        }
        let e = energy(&state);
        if e > previous {
            return Err(format!("object energy rose from {previous:e} to {e:e} at t = {}", state.t));
        }
        previous = e;
    }
    Ok(())
}

/// Two runs of the same scenario agree bit for bit.
pub fn check_determinism(scenario: &Scenario, control_steps: usize) -> Result<(), String> {
    let mut first = Vec::new();
    scenario
        .simulate(control_steps, |s, _| first.push(*s))
        .map_err(|e| e.to_string())?;
    let mut i = 0;
    let mut mismatch = None;
    scenario
        .simulate(control_steps, |s, _| {
            if mismatch.is_none() && *s != first[i] {
                mismatch = Some(i);
            }
            i += 1;
        })
        .map_err(|e| e.to_string())?;
    match mismatch {
        Some(i) => Err(format!("runs diverge at physics step {i}")),
        None => Ok(()),
    }
}

/// Shifting bases, object and goal by a common vector shifts the object
/// trajectory by that vector and leaves joints and rewards unchanged, up to
/// rounding.
pub fn check_translation(scenario: &Scenario, offset: Vector2<f64>, control_steps: usize) -> Result<(), String> {
    const TOL: f64 = 1e-9;
    let moved = scenario.translated(offset);
    let mut base = Vec::new();
    scenario
        .simulate(control_steps, |s, tau| base.push((*s, *tau)))
        .map_err(|e| e.to_string())?;
    let mut i = 0;
    let mut failure = None;
    moved
        .simulate(control_steps, |s, tau| {
            let (b, btau) = &base[i];
            i += 1;
            if failure.is_some() {
                return;
            }
            let joints = s.q.iter().zip(&b.q).chain(s.qdot.iter().zip(&b.qdot)).all(|(x, y)| (x - y).abs() <= TOL);
            let object = (s.obj_pos - offset - b.obj_pos).amax() <= TOL && (s.obj_vel - b.obj_vel).amax() <= TOL;
            let torques = tau.iter().zip(btau).all(|(x, y)| (x - y).abs() <= TOL);
            let r_base = reward(&Observation::new(b, scenario.goal), btau, &scenario.params);
            let r_moved = reward(&Observation::new(s, moved.goal), tau, &moved.params);
            if !(joints && object && torques && (r_base - r_moved).abs() <= TOL) {
                failure = Some(format!("translated run differs at t = {}", s.t));
            }
        })
        .map_err(|e| e.to_string())?;
    failure.map_or(Ok(()), Err)
}

/// Runs every suite on the scenario for `seed` (translation by a seeded
/// offset within ±1 m). Returns the contact statistics, or the name of the
/// first failing suite and its message.
pub fn check_all(seed: u64) -> Result<ContactStats, (&'static str, String)> {
    let scenario = Scenario::random(seed);
    let stats = check_contacts(&scenario, SHORT_ROLLOUT_STEPS).map_err(|e| ("friction cone / penetration", e))?;
    check_passivity(seed, 20 * SHORT_ROLLOUT_STEPS).map_err(|e| ("passivity", e))?;
    check_determinism(&scenario, SHORT_ROLLOUT_STEPS).map_err(|e| ("determinism", e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a5);
    let offset = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    check_translation(&scenario, offset, SHORT_ROLLOUT_STEPS).map_err(|e| ("translation", e))?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenarios_are_reproducible_and_varied() {
        let a = Scenario::random(3);
        let b = Scenario::random(3);
        assert_eq!(a.params, b.params);
        assert_eq!(a.start, b.start);
        assert_ne!(Scenario::random(4).params, a.params);
    }
}
