use std::fmt::Write as _;
use std::path::Path;

use crate::sim::{Configuration, CONFIG_DIM, NUM_JOINTS};

use super::SysIdError;

/// CSV header of a recorded run.
pub const RUN_CSV_HEADER: &str = "t,tau0,tau1,tau2,tau3,tau4,tau5,q0,q1,q2,q3,q4,q5,obj_x,obj_y";

/// Uniformly sampled sensor readings and the torques applied after each one.
///
/// `torques[i]` acts over the interval from sample `i` to sample `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRun {
    pub dt: f64,
    pub torques: Vec<[f64; NUM_JOINTS]>,
    pub sensors: Vec<[f64; CONFIG_DIM]>,
}

impl RecordedRun {
    pub fn new(dt: f64, torques: Vec<[f64; NUM_JOINTS]>, sensors: Vec<[f64; CONFIG_DIM]>) -> Result<Self, SysIdError> {
        let run = Self { dt, torques, sensors };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<(), SysIdError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SysIdError::InvalidRun(format!("sample spacing {} must be positive", self.dt)));
        }
        if self.torques.len() != self.sensors.len() {
            return Err(SysIdError::InvalidRun(format!(
                "{} torque rows but {} sensor rows",
                self.torques.len(),
                self.sensors.len()
            )));
        }
        if self.len() < 3 {
            return Err(SysIdError::InvalidRun(format!("need at least 3 samples, got {}", self.len())));
        }
        let finite = self.torques.iter().flatten().chain(self.sensors.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(SysIdError::InvalidRun("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    /// Sensor readings as configurations, the default state estimate.
    pub fn configurations(&self) -> Vec<Configuration> {
        self.sensors.iter().map(|s| Configuration::from_slice(s)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 200);
        out.push_str(RUN_CSV_HEADER);
        out.push('\n');
        for (i, (u, s)) in self.torques.iter().zip(&self.sensors).enumerate() {
            let _ = write!(out, "{:?}", i as f64 * self.dt);
            for v in u.iter().chain(s) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV written by [`RecordedRun::to_csv`]. The sample spacing
    /// is taken from the time column and must be uniform to 1e-9 relative.
    pub fn from_csv(text: &str) -> Result<Self, SysIdError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == RUN_CSV_HEADER => {}
            _ => return Err(SysIdError::Csv { line: 1, message: format!("expected header `{RUN_CSV_HEADER}`") }),
        }
        let mut times = Vec::new();
        let mut torques = Vec::new();
        let mut sensors = Vec::new();
        for (idx, line) in lines {
            let fields: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let fields = fields.map_err(|e| SysIdError::Csv { line: idx + 1, message: e.to_string() })?;
            if fields.len() != 1 + NUM_JOINTS + CONFIG_DIM {
                return Err(SysIdError::Csv {
                    line: idx + 1,
                    message: format!("expected {} columns, got {}", 1 + NUM_JOINTS + CONFIG_DIM, fields.len()),
                });
            }
            times.push(fields[0]);
            torques.push(std::array::from_fn(|j| fields[1 + j]));
            sensors.push(std::array::from_fn(|j| fields[1 + NUM_JOINTS + j]));
        }
        if times.len() < 2 {
            return Err(SysIdError::InvalidRun(format!("need at least 3 samples, got {}", times.len())));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-12) + 1e-12 {
                return Err(SysIdError::InvalidRun(format!("non-uniform sampling at row {}", i + 2)));
            }
        }
        Self::new(dt, torques, sensors)
    }

    pub fn load(path: &Path) -> Result<Self, SysIdError> {
        let text = std::fs::read_to_string(path).map_err(|e| SysIdError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SysIdError> {
        std::fs::write(path, self.to_csv()).map_err(|e| SysIdError::Io(format!("{}: {e}", path.display())))
    }
}
