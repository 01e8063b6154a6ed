use nalgebra::Vector2;

use super::contact::contact_for_finger;
use super::kinematics::fingertip_with_jacobian;
use super::params::{ModelParams, NUM_FINGERS, NUM_JOINTS};
use super::state::{Configuration, SimState, CONFIG_DIM};

/// Velocity scale of the tanh-smoothed Coulomb ground friction (m/s).
pub const COULOMB_SMOOTHING_VEL: f64 = 1e-3;
/// Largest admissible physics step (s).
pub const MAX_DT: f64 = 0.002;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("simulation produced a non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("time step {0} outside (0, {MAX_DT}]")]
    InvalidTimeStep(f64),
}

/// Generalized forces other than the actuator torques: joint damping and
/// contact reactions on the fingers, contact and ground friction on the object.
struct PassiveForces {
    joints: [f64; NUM_JOINTS],
    object: Vector2<f64>,
}

fn passive_forces(state: &SimState, params: &ModelParams, dt: f64) -> PassiveForces {
    let mut joints = [0.0; NUM_JOINTS];
    for (tau, qd) in joints.iter_mut().zip(&state.qdot) {
        *tau = -params.joint_damping * qd;
    }
    let mut object = Vector2::zeros();
    for f in 0..NUM_FINGERS {
        let (tip, jac) = fingertip_with_jacobian(&state.q, params, f);
        let tip_vel = jac * Vector2::new(state.qdot[2 * f], state.qdot[2 * f + 1]);
        if let Some(c) = contact_for_finger(f, tip, tip_vel, state, params) {
            let on_object = c.force_on_object();
            object += on_object;
            let reaction = jac.transpose() * (-on_object);
            joints[2 * f] += reaction.x;
            joints[2 * f + 1] += reaction.y;
        }
    }
    let speed = state.obj_vel.norm();
    // tanh(v/ε)/v, continuous at v = 0
    let coulomb_gain = if speed > 1e-12 {
        (speed / COULOMB_SMOOTHING_VEL).tanh() / speed
    } else {
        1.0 / COULOMB_SMOOTHING_VEL
    };
    // Explicit friction with a rate above 1/dt would reverse the sliding
    // direction and pump energy in; cap it so one step at most stops the disk.
    let rate = (params.ground_coulomb_decel * coulomb_gain + params.ground_viscous).min(1.0 / dt);
    object -= state.obj_vel * (rate * params.object_mass);
    PassiveForces { joints, object }
}

/// Advances the state by one semi-implicit Euler step of length `dt`.
///
/// Velocities are updated from forces evaluated at the current state, then
/// positions from the new velocities.
pub fn step(
    state: &SimState,
    torques: &[f64; NUM_JOINTS],
    params: &ModelParams,
    dt: f64,
) -> Result<SimState, SimError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(SimError::InvalidTimeStep(dt));
    }
    let passive = passive_forces(state, params, dt);
    let mut next = *state;
    for f in 0..NUM_FINGERS {
        let inertia = params.joint_inertia(f);
        for j in 0..2 {
            let idx = 2 * f + j;
            let acc = (torques[idx] + passive.joints[idx]) / inertia[j];
            next.qdot[idx] = state.qdot[idx] + dt * acc;
            next.q[idx] = state.q[idx] + dt * next.qdot[idx];
        }
    }
    next.obj_vel = state.obj_vel + passive.object * (dt / params.object_mass);
    next.obj_pos = state.obj_pos + next.obj_vel * dt;
    next.t = state.t + dt;
    if next.is_finite() {
        Ok(next)
    } else {
        Err(SimError::NonFiniteState { t: next.t })
    }
}

/// Output of [`inverse_dynamics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseDynamics {
    /// Joint torques that reproduce the observed accelerations.
    pub torques: [f64; NUM_JOINTS],
    /// External force the (unactuated) object would need; zero for data
    /// consistent with the model.
    pub object_force: Vector2<f64>,
    /// Predicted sensor readings at the middle sample.
    pub sensors: [f64; CONFIG_DIM],
}

/// Sensor model: joint encoders plus object position, both noiseless.
pub fn sensor_model(config: &Configuration) -> [f64; CONFIG_DIM] {
    config.to_array()
}

/// Recovers the generalized forces acting between three consecutive
/// configurations sampled `dt` apart.
///
/// Velocities and accelerations are the backward differences that [`step`]
/// implies, so feeding a simulated trajectory back reproduces the applied
/// torques up to rounding.
pub fn inverse_dynamics(
    prev: &Configuration,
    cur: &Configuration,
    next: &Configuration,
    params: &ModelParams,
    dt: f64,
) -> InverseDynamics {
    let mut state = SimState {
        q: cur.q,
        qdot: [0.0; NUM_JOINTS],
        obj_pos: cur.obj_pos,
        obj_vel: (cur.obj_pos - prev.obj_pos) / dt,
        t: 0.0,
    };
    let mut qdot_next = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        state.qdot[i] = (cur.q[i] - prev.q[i]) / dt;
        qdot_next[i] = (next.q[i] - cur.q[i]) / dt;
    }
    let obj_vel_next = (next.obj_pos - cur.obj_pos) / dt;
    let passive = passive_forces(&state, params, dt);
    let mut torques = [0.0; NUM_JOINTS];
    for f in 0..NUM_FINGERS {
        let inertia = params.joint_inertia(f);
        for j in 0..2 {
            let idx = 2 * f + j;
            let acc = (qdot_next[idx] - state.qdot[idx]) / dt;
            torques[idx] = inertia[j] * acc - passive.joints[idx];
        }
    }
    let obj_acc = (obj_vel_next - state.obj_vel) / dt;
    InverseDynamics {
        torques,
        object_force: obj_acc * params.object_mass - passive.object,
        sensors: sensor_model(cur),
    }
}
