use nalgebra::{Matrix2, Vector2};

use super::params::{ModelParams, NUM_FINGERS, NUM_JOINTS};

/// Joint angles of one finger, proximal first.
#[inline]
fn finger_angles(q: &[f64; NUM_JOINTS], finger: usize) -> (f64, f64) {
    (q[2 * finger], q[2 * finger + 1])
}

/// Fingertip position of a single finger.
///
/// Angles are counterclockwise; `(0, 0)` extends the arm straight along the
/// base orientation.
pub fn fingertip(q: &[f64; NUM_JOINTS], params: &ModelParams, finger: usize) -> Vector2<f64> {
    let pose = &params.base_poses[finger];
    let [l1, l2] = params.link_lengths[finger];
    let (q1, q2) = finger_angles(q, finger);
    let a1 = pose.orientation + q1;
    let a2 = a1 + q2;
    pose.position + Vector2::new(l1 * a1.cos() + l2 * a2.cos(), l1 * a1.sin() + l2 * a2.sin())
}

/// Fingertip positions of all three fingers.
pub fn forward_kinematics(q: &[f64; NUM_JOINTS], params: &ModelParams) -> [Vector2<f64>; NUM_FINGERS] {
    std::array::from_fn(|f| fingertip(q, params, f))
}

/// Fingertip position and its 2×2 Jacobian with respect to the finger's two joints.
pub fn fingertip_with_jacobian(
    q: &[f64; NUM_JOINTS],
    params: &ModelParams,
    finger: usize,
) -> (Vector2<f64>, Matrix2<f64>) {
    let pose = &params.base_poses[finger];
    let [l1, l2] = params.link_lengths[finger];
    let (q1, q2) = finger_angles(q, finger);
    let a1 = pose.orientation + q1;
    let a2 = a1 + q2;
    let (s1, c1) = a1.sin_cos();
    let (s2, c2) = a2.sin_cos();
    let tip = pose.position + Vector2::new(l1 * c1 + l2 * c2, l1 * s1 + l2 * s2);
    let jac = Matrix2::new(-l1 * s1 - l2 * s2, -l2 * s2, l1 * c1 + l2 * c2, l2 * c2);
    (tip, jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::params::BasePose;
    use std::f64::consts::PI;

    fn single_base(position: Vector2<f64>, orientation: f64) -> ModelParams {
        let mut p = ModelParams::default();
        p.base_poses[0] = BasePose { position, orientation };
        p.link_lengths[0] = [0.13, 0.13];
        p
    }

    #[test]
    fn straight_arm_points_along_base_axis() {
        let p = single_base(Vector2::new(0.2, 0.0), PI);
        let tip = fingertip(&[0.0; 6], &p, 0);
        assert!((tip - Vector2::new(-0.06, 0.0)).norm() < 1e-12, "{tip}");
    }

    #[test]
    fn folded_elbow_returns_to_base_for_equal_links() {
        let p = single_base(Vector2::new(0.2, 0.0), PI);
        let tip = fingertip(&[0.4, PI, 0.0, 0.0, 0.0, 0.0], &p, 0);
        assert!((tip - Vector2::new(0.2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn base_translation_shifts_tip() {
        let q = [0.3, -0.7, 1.1, 0.2, -0.5, 0.9];
        let p = ModelParams::default();
        let mut moved = p.clone();
        let delta = Vector2::new(0.013, -0.004);
        for pose in &mut moved.base_poses {
            pose.position += delta;
        }
        let a = forward_kinematics(&q, &p);
        let b = forward_kinematics(&q, &moved);
        for f in 0..3 {
            assert!((b[f] - a[f] - delta).norm() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = ModelParams::default();
        let q = [0.3, -0.7, 1.1, 0.2, -0.5, 0.9];
        for f in 0..3 {
            let (_, jac) = fingertip_with_jacobian(&q, &p, f);
            for j in 0..2 {
                let h = 1e-6;
                let mut qp = q;
                let mut qm = q;
                qp[2 * f + j] += h;
                qm[2 * f + j] -= h;
                let fd = (fingertip(&qp, &p, f) - fingertip(&qm, &p, f)) / (2.0 * h);
                assert!((fd - jac.column(j)).norm() < 1e-8);
            }
        }
    }
}
