use nalgebra::Vector2;

use super::params::NUM_JOINTS;

/// Full dynamic state of the rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub q: [f64; NUM_JOINTS],
    pub qdot: [f64; NUM_JOINTS],
    pub obj_pos: Vector2<f64>,
    pub obj_vel: Vector2<f64>,
    pub t: f64,
}

impl SimState {
    /// Fingers at `q`, everything at rest, object at the origin, `t = 0`.
    pub fn at_rest(q: [f64; NUM_JOINTS]) -> Self {
        Self {
            q,
            qdot: [0.0; NUM_JOINTS],
            obj_pos: Vector2::zeros(),
            obj_vel: Vector2::zeros(),
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).all(|v| v.is_finite())
            && self.obj_pos.iter().chain(self.obj_vel.iter()).all(|v| v.is_finite())
            && self.t.is_finite()
    }

    pub fn configuration(&self) -> Configuration {
        Configuration {
            q: self.q,
            obj_pos: self.obj_pos,
        }
    }
}

/// Positional part of the state: joint angles and object position. This is
/// also exactly what the sensors report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub q: [f64; NUM_JOINTS],
    pub obj_pos: Vector2<f64>,
}

/// Number of scalar entries in a [`Configuration`].
pub const CONFIG_DIM: usize = NUM_JOINTS + 2;

impl Configuration {
    pub fn to_array(&self) -> [f64; CONFIG_DIM] {
        let mut out = [0.0; CONFIG_DIM];
        out[..NUM_JOINTS].copy_from_slice(&self.q);
        out[NUM_JOINTS] = self.obj_pos.x;
        out[NUM_JOINTS + 1] = self.obj_pos.y;
        out
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut q = [0.0; NUM_JOINTS];
        q.copy_from_slice(&values[..NUM_JOINTS]);
        Self {
            q,
            obj_pos: Vector2::new(values[NUM_JOINTS], values[NUM_JOINTS + 1]),
        }
    }
}
