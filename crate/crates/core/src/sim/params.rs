use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;

use crate::kv::{self, KvError};

/// Number of fingers in the rig.
pub const NUM_FINGERS: usize = 3;
/// Actuated joints per finger.
pub const JOINTS_PER_FINGER: usize = 2;
/// Total actuated joints.
pub const NUM_JOINTS: usize = NUM_FINGERS * JOINTS_PER_FINGER;

/// Planar pose of a finger base: position of the first joint and the
/// direction the arm points when both joint angles are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePose {
    pub position: Vector2<f64>,
    pub orientation: f64,
}

/// Physical parameters of the rig and the pushed disk. All values in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub object_mass: f64,
    pub object_radius: f64,
    /// Coulomb ground friction expressed as a deceleration (m/s²).
    pub ground_coulomb_decel: f64,
    /// Viscous ground friction rate (1/s).
    pub ground_viscous: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub contact_friction_mu: f64,
    pub base_poses: [BasePose; NUM_FINGERS],
    /// Proximal and distal link lengths per finger.
    pub link_lengths: [[f64; JOINTS_PER_FINGER]; NUM_FINGERS],
    /// Proximal and distal link masses, shared by all fingers.
    pub link_masses: [f64; JOINTS_PER_FINGER],
    pub joint_damping: f64,
    pub fingertip_radius: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error("invalid model parameter `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("missing model parameter `{0}`")]
    Missing(String),
    #[error("unknown model parameter `{key}` on line {line}")]
    Unknown { key: String, line: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Default for ModelParams {
    fn default() -> Self {
        let base_radius = 0.2;
        let base_poses = std::array::from_fn(|i| {
            let angle = i as f64 * 2.0 * std::f64::consts::PI / NUM_FINGERS as f64;
            BasePose {
                position: Vector2::new(base_radius * angle.cos(), base_radius * angle.sin()),
                orientation: angle + std::f64::consts::PI,
            }
        });
        Self {
            object_mass: 0.34,
            object_radius: 0.055,
            ground_coulomb_decel: 3.0,
            ground_viscous: 2.0,
            contact_stiffness: 2000.0,
            contact_damping: 20.0,
            contact_friction_mu: 0.8,
            base_poses,
            link_lengths: [[0.13, 0.13]; NUM_FINGERS],
            link_masses: [0.1, 0.1],
            joint_damping: 0.2,
            fingertip_radius: 0.01,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        fn check(ok: bool, key: &'static str, reason: &str) -> Result<(), ParamsError> {
            if ok {
                Ok(())
            } else {
                Err(ParamsError::Invalid {
                    key,
                    reason: reason.to_string(),
                })
            }
        }
        let finite = self.to_pairs().iter().all(|(_, v)| v.is_finite());
        check(finite, "*", "all parameters must be finite")?;
        check(self.object_mass > 0.0, "object_mass", "must be > 0")?;
        check(self.object_radius > 0.0, "object_radius", "must be > 0")?;
        check(self.contact_stiffness > 0.0, "contact_stiffness", "must be > 0")?;
        check(self.contact_damping >= 0.0, "contact_damping", "must be >= 0")?;
        check(self.contact_friction_mu >= 0.0, "contact_friction_mu", "must be >= 0")?;
        check(self.ground_coulomb_decel >= 0.0, "ground_coulomb_decel", "must be >= 0")?;
        check(self.ground_viscous >= 0.0, "ground_viscous", "must be >= 0")?;
        check(self.joint_damping >= 0.0, "joint_damping", "must be >= 0")?;
        check(self.fingertip_radius >= 0.0, "fingertip_radius", "must be >= 0")?;
        check(
            self.link_lengths.iter().flatten().all(|&l| l > 0.0),
            "link_lengths",
            "must be > 0",
        )?;
        check(
            self.link_masses.iter().all(|&m| m > 0.0),
            "link_masses",
            "must be > 0",
        )?;
        for i in 0..NUM_FINGERS {
            for j in (i + 1)..NUM_FINGERS {
                let gap = (self.base_poses[i].position - self.base_poses[j].position).norm();
                check(gap > 0.0, "base_poses", "base positions must be distinct")?;
            }
        }
        Ok(())
    }

    /// Lumped (configuration independent) inertia of each joint of `finger`.
    ///
    /// The proximal joint carries its own link as a rod about its end plus the
    /// distal link as a point mass at the elbow and a rod about the elbow.
    pub fn joint_inertia(&self, finger: usize) -> [f64; JOINTS_PER_FINGER] {
        let [l1, l2] = self.link_lengths[finger];
        let [m1, m2] = self.link_masses;
        let distal = m2 * l2 * l2 / 3.0;
        [(m1 / 3.0 + m2) * l1 * l1 + distal, distal]
    }

    /// Flat `(key, value)` view in the documented key order.
    pub fn to_pairs(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("object_mass".to_string(), self.object_mass),
            ("object_radius".to_string(), self.object_radius),
            ("ground_coulomb_decel".to_string(), self.ground_coulomb_decel),
            ("ground_viscous".to_string(), self.ground_viscous),
            ("contact_stiffness".to_string(), self.contact_stiffness),
            ("contact_damping".to_string(), self.contact_damping),
            ("contact_friction_mu".to_string(), self.contact_friction_mu),
        ];
        for (i, pose) in self.base_poses.iter().enumerate() {
            out.push((format!("base{i}_x"), pose.position.x));
            out.push((format!("base{i}_y"), pose.position.y));
            out.push((format!("base{i}_theta"), pose.orientation));
        }
        for (i, lengths) in self.link_lengths.iter().enumerate() {
            out.push((format!("finger{i}_link1_length"), lengths[0]));
            out.push((format!("finger{i}_link2_length"), lengths[1]));
        }
        out.push(("link1_mass".to_string(), self.link_masses[0]));
        out.push(("link2_mass".to_string(), self.link_masses[1]));
        out.push(("joint_damping".to_string(), self.joint_damping));
        out.push(("fingertip_radius".to_string(), self.fingertip_radius));
        out
    }

    /// Mutable access to a parameter by its file key.
    pub fn field_mut(&mut self, key: &str) -> Option<&mut f64> {
        let scalar = match key {
            "object_mass" => Some(&mut self.object_mass),
            "object_radius" => Some(&mut self.object_radius),
            "ground_coulomb_decel" => Some(&mut self.ground_coulomb_decel),
            "ground_viscous" => Some(&mut self.ground_viscous),
            "contact_stiffness" => Some(&mut self.contact_stiffness),
            "contact_damping" => Some(&mut self.contact_damping),
            "contact_friction_mu" => Some(&mut self.contact_friction_mu),
            "link1_mass" => Some(&mut self.link_masses[0]),
            "link2_mass" => Some(&mut self.link_masses[1]),
            "joint_damping" => Some(&mut self.joint_damping),
            "fingertip_radius" => Some(&mut self.fingertip_radius),
            _ => None,
        };
        if scalar.is_some() {
            return scalar;
        }
        if let Some(rest) = key.strip_prefix("base") {
            let (idx, field) = rest.split_once('_')?;
            let pose = self.base_poses.get_mut(idx.parse::<usize>().ok()?)?;
            return match field {
                "x" => Some(&mut pose.position.x),
                "y" => Some(&mut pose.position.y),
                "theta" => Some(&mut pose.orientation),
                _ => None,
            };
        }
        if let Some(rest) = key.strip_prefix("finger") {
            let (idx, field) = rest.split_once('_')?;
            let lengths = self.link_lengths.get_mut(idx.parse::<usize>().ok()?)?;
            return match field {
                "link1_length" => Some(&mut lengths[0]),
                "link2_length" => Some(&mut lengths[1]),
                _ => None,
            };
        }
        None
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.clone().field_mut(key).map(|v| *v)
    }

    /// Serializes to the `key = value` text format. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k} = {v:?}");
        }
        out
    }

    /// Parses a `key = value` document. Keys that are absent keep their
    /// default value; unknown keys are an error.
    pub fn from_kv_str(text: &str) -> Result<Self, ParamsError> {
        let mut params = Self::default();
        for entry in kv::parse(text)? {
            if entry.section.is_some() {
                return Err(ParamsError::Kv(KvError::Syntax {
                    line: entry.line,
                    message: "section headers are not allowed in a model file".into(),
                }));
            }
            params.apply_entry(&entry.key, &entry.value, entry.line)?;
        }
        params.validate()?;
        Ok(params)
    }

    pub(crate) fn apply_entry(&mut self, key: &str, value: &str, line: usize) -> Result<(), ParamsError> {
        let parsed = kv::parse_f64(value, line)?;
        let slot = self.field_mut(key).ok_or_else(|| ParamsError::Unknown {
            key: key.to_string(),
            line,
        })?;
        *slot = parsed;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ParamsError> {
        let text = std::fs::read_to_string(path).map_err(|source| ParamsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_kv_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ParamsError> {
        std::fs::write(path, self.to_kv_string()).map_err(|source| ParamsError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
