//! Planar simulator: three two-link torque-controlled fingers pushing a disk
//! on a table with penalty contacts.

mod contact;
mod dynamics;
mod kinematics;
mod params;
pub mod properties;
mod state;

pub use contact::{contact_forces, ContactForce};
pub use dynamics::{
    inverse_dynamics, sensor_model, step, InverseDynamics, SimError, COULOMB_SMOOTHING_VEL, MAX_DT,
};
pub use kinematics::{fingertip, fingertip_with_jacobian, forward_kinematics};
pub use params::{BasePose, ModelParams, ParamsError, JOINTS_PER_FINGER, NUM_FINGERS, NUM_JOINTS};
pub use state::{Configuration, SimState, CONFIG_DIM};

/// Physics step used for training and evaluation (2 kHz).
pub const PHYSICS_DT: f64 = 5e-4;
/// Physics steps per control step (100 Hz control).
pub const SUBSTEPS_PER_CONTROL: usize = 20;
/// Duration of one control step.
pub const CONTROL_DT: f64 = PHYSICS_DT * SUBSTEPS_PER_CONTROL as f64;
