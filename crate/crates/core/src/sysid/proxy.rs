use std::f64::consts::TAU;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::sim::{fingertip_with_jacobian, step, Configuration, ModelParams, SimState, NUM_FINGERS, NUM_JOINTS};
use crate::task::home_pose;

use super::run::RecordedRun;
use super::SysIdError;

/// Scripted pushing controller: each fingertip is pulled by a Cartesian
/// spring toward a point on the object surface that presses in and sweeps
/// sideways, so contacts both push the object around and slide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushScript {
    /// Cartesian spring (N/m) and damper (N·s/m) at the fingertip.
    pub stiffness: f64,
    pub damping: f64,
    /// Mean and oscillating press depth into the object surface (m).
    pub press: f64,
    pub press_amp: f64,
    pub press_hz: f64,
    /// Amplitude (m) and frequency of the tangential sweep.
    pub sweep_amp: f64,
    pub sweep_hz: f64,
    /// Symmetric torque limit (N·m).
    pub max_torque: f64,
}

impl Default for PushScript {
    fn default() -> Self {
        Self {
            stiffness: 300.0,
            damping: 4.0,
            press: 0.004,
            press_amp: 0.003,
            press_hz: 1.0,
            sweep_amp: 0.03,
            sweep_hz: 2.0,
            max_torque: 1.0,
        }
    }
}

impl PushScript {
    pub fn torques(&self, state: &SimState, params: &ModelParams) -> [f64; NUM_JOINTS] {
        let reach = params.object_radius + params.fingertip_radius;
        let t = state.t;
        let mut tau = [0.0; NUM_JOINTS];
        for f in 0..NUM_FINGERS {
            let phase = f as f64 * TAU / NUM_FINGERS as f64;
            let (tip, jac) = fingertip_with_jacobian(&state.q, params, f);
            let tip_vel = jac * Vector2::new(state.qdot[2 * f], state.qdot[2 * f + 1]);
            let out = params.base_poses[f].position - state.obj_pos;
            let out = out / out.norm().max(1e-9);
            let side = Vector2::new(-out.y, out.x);
            let depth = self.press + self.press_amp * (TAU * self.press_hz * t + phase).sin();
            let sweep = self.sweep_amp * (TAU * self.sweep_hz * t + phase).sin();
            let target = state.obj_pos + out * (reach - depth) + side * sweep;
            let force = (target - tip) * self.stiffness - tip_vel * self.damping;
            let joint = jac.transpose() * force;
            tau[2 * f] = joint.x.clamp(-self.max_torque, self.max_torque);
            tau[2 * f + 1] = joint.y.clamp(-self.max_torque, self.max_torque);
        }
        tau
    }
}

/// Stand-in for the physical rig: the simulator with hidden parameters,
/// sampled at every physics step, with optional Gaussian sensor noise.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareProxy {
    pub hidden: ModelParams,
    pub sensor_noise: f64,
    pub dt: f64,
}

impl HardwareProxy {
    pub fn new(hidden: ModelParams, sensor_noise: f64) -> Self {
        Self {
            hidden,
            sensor_noise,
            dt: crate::sim::PHYSICS_DT,
        }
    }

    /// Records `duration` seconds of `script` from the home pose. Returns the
    /// run and the noiseless configurations.
    pub fn record<R: Rng + ?Sized>(
        &self,
        script: &PushScript,
        duration: f64,
        rng: &mut R,
    ) -> Result<(RecordedRun, Vec<Configuration>), SysIdError> {
        let samples = (duration / self.dt).round() as usize + 1;
        let noise = Normal::new(0.0, self.sensor_noise)
            .map_err(|e| SysIdError::InvalidProblem(format!("sensor noise: {e}")))?;
        let mut state = SimState::at_rest(home_pose(&self.hidden));
        let mut torques = Vec::with_capacity(samples);
        let mut sensors = Vec::with_capacity(samples);
        let mut truth = Vec::with_capacity(samples);
        for i in 0..samples {
            let u = script.torques(&state, &self.hidden);
            let config = state.configuration();
            let mut s = config.to_array();
            if self.sensor_noise > 0.0 {
                for v in &mut s {
                    *v += noise.sample(rng);
                }
            }
            truth.push(config);
            sensors.push(s);
            torques.push(u);
            if i + 1 < samples {
                state = step(&state, &u, &self.hidden, self.dt)?;
            }
        }
        Ok((RecordedRun::new(self.dt, torques, sensors)?, truth))
    }
}

/// Default scripted pushing run on hidden parameters `hidden`.
pub fn pushing_run<R: Rng + ?Sized>(
    hidden: &ModelParams,
    duration: f64,
    sensor_noise: f64,
    rng: &mut R,
) -> Result<(RecordedRun, Vec<Configuration>), SysIdError> {
    HardwareProxy::new(hidden.clone(), sensor_noise).record(&PushScript::default(), duration, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::contact_forces;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn script_makes_contact_and_moves_the_object() {
        let p = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (run, truth) = pushing_run(&p, 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(run.len(), 2001);
        let moved = truth.iter().map(|c| c.obj_pos.norm()).fold(0.0, f64::max);
        assert!(moved > 1e-3, "object moved only {moved}");
        let mut state = SimState::at_rest(home_pose(&p));
        let mut touching = 0;
        for u in &run.torques[..1000] {
            touching += usize::from(!contact_forces(&state, &p).is_empty());
            state = step(&state, u, &p, run.dt).unwrap();
        }
        assert!(touching > 500);
    }

    #[test]
    fn noiseless_sensors_equal_the_configuration() {
        let p = ModelParams::default();
        let (run, truth) = pushing_run(&p, 0.05, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (s, c) in run.sensors.iter().zip(&truth) {
            assert_eq!(*s, c.to_array());
        }
    }
}
