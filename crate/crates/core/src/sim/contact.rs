use nalgebra::Vector2;

use super::kinematics::fingertip_with_jacobian;
use super::params::{ModelParams, NUM_FINGERS};
use super::state::SimState;

/// Force exerted by a fingertip on the object.
///
/// `normal` points from the fingertip into the object; `tangent_force` is
/// signed along the counterclockwise perpendicular of `normal`. The finger
/// receives the opposite force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForce {
    pub finger: usize,
    pub point: Vector2<f64>,
    pub normal: Vector2<f64>,
    pub normal_force: f64,
    pub tangent_force: f64,
    pub penetration: f64,
}

impl ContactForce {
    #[inline]
    pub fn tangent(&self) -> Vector2<f64> {
        Vector2::new(-self.normal.y, self.normal.x)
    }

    /// Total force on the object.
    #[inline]
    pub fn force_on_object(&self) -> Vector2<f64> {
        self.normal * self.normal_force + self.tangent() * self.tangent_force
    }
}

/// Penalty contact between a fingertip and the disk.
///
/// Normal: `k·δ + c·max(0, approach speed)`. Tangential: regularized Coulomb,
/// `min(μ·N, c·|v_t|)` opposing the sliding velocity, where the viscous
/// coefficient reuses the contact damping.
pub(crate) fn contact_for_finger(
    finger: usize,
    tip: Vector2<f64>,
    tip_vel: Vector2<f64>,
    state: &SimState,
    params: &ModelParams,
) -> Option<ContactForce> {
    let d = state.obj_pos - tip;
    let dist = d.norm();
    let penetration = params.fingertip_radius + params.object_radius - dist;
    if penetration <= 0.0 || dist <= f64::EPSILON {
        return None;
    }
    let normal = d / dist;
    let tangent = Vector2::new(-normal.y, normal.x);
    let rel = state.obj_vel - tip_vel;
    let approach = -rel.dot(&normal);
    let normal_force =
        (params.contact_stiffness * penetration + params.contact_damping * approach.max(0.0)).max(0.0);
    let limit = params.contact_friction_mu * normal_force;
    let tangent_force = -(params.contact_damping * rel.dot(&tangent)).clamp(-limit, limit);
    Some(ContactForce {
        finger,
        point: tip + normal * params.fingertip_radius,
        normal,
        normal_force,
        tangent_force,
        penetration,
    })
}

/// All active fingertip/object contacts at `state`.
pub fn contact_forces(state: &SimState, params: &ModelParams) -> Vec<ContactForce> {
    (0..NUM_FINGERS)
        .filter_map(|f| {
            let (tip, jac) = fingertip_with_jacobian(&state.q, params, f);
            let tip_vel = jac * Vector2::new(state.qdot[2 * f], state.qdot[2 * f + 1]);
            contact_for_finger(f, tip, tip_vel, state, params)
        })
        .collect()
}
