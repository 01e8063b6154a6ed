//! Run configuration: a sectioned `key = value` file.
//!
//! Every key is optional and falls back to its default. Unknown sections and
//! keys are errors so that typos do not silently change a run.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::batch::AdvantageConfig;
use crate::kv::{self, Entry, KvError};
use crate::policy::DEFAULT_INIT_LOG_STD;
use crate::sim::{ModelParams, ParamsError};
use crate::task::{EnsembleConfig, TaskConfig};
use crate::value::DEFAULT_RIDGE;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: key `{key}` appears outside any section")]
    NoSection { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpgConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub init_log_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedConfig {
    pub listen: String,
    pub workers: usize,
    pub rollouts_per_worker: usize,
    pub base_seed: u64,
    pub round_timeout_s: f64,
    pub connect_retries: u32,
    pub retry_backoff_s: f64,
    /// Rollouts of the initial policy used to fix the observation whitening.
    pub calibration_rollouts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub rollouts: usize,
    /// Evaluate every this many iterations during training; 0 disables.
    pub every: usize,
    pub mean_actions: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub model: ModelParams,
    pub task: TaskConfig,
    pub npg: NpgConfig,
    pub value: ValueConfig,
    pub distributed: DistributedConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelParams::default();
        Self {
            name: "run".into(),
            task: TaskConfig {
                ensemble: EnsembleConfig::fixed(model.object_mass),
                ..TaskConfig::default()
            },
            model,
            npg: NpgConfig {
                step_size: 0.05,
                iterations: 200,
                init_log_std: DEFAULT_INIT_LOG_STD,
            },
            value: ValueConfig {
                gamma: 0.995,
                lambda: 0.97,
                ridge: DEFAULT_RIDGE,
            },
            distributed: DistributedConfig {
                listen: "127.0.0.1:7878".into(),
                workers: 4,
                rollouts_per_worker: 25,
                base_seed: 1,
                round_timeout_s: 120.0,
                connect_retries: 3,
                retry_backoff_s: 0.5,
                calibration_rollouts: 20,
            },
            eval: EvalConfig {
                rollouts: 10,
                every: 10,
                mean_actions: false,
                seed: 12345,
            },
        }
    }
}

fn bad(e: &Entry, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        line: e.line,
        key: e.key.clone(),
        value: e.value.clone(),
        reason: reason.into(),
    }
}

fn num(e: &Entry) -> Result<f64, ConfigError> {
    kv::parse_f64(&e.value, e.line).map_err(|_| bad(e, "expected a number"))
}

fn count(e: &Entry) -> Result<usize, ConfigError> {
    e.value.parse().map_err(|_| bad(e, "expected a non-negative integer"))
}

fn flag(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(bad(e, "expected true or false")),
    }
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut mass_mean_set = false;
        for e in kv::parse(text)? {
            let Some(section) = e.section.clone() else {
                return Err(ConfigError::NoSection {
                    line: e.line,
                    key: e.key.clone(),
                });
            };
            let unknown = || ConfigError::UnknownKey {
                line: e.line,
                section: section.clone(),
                key: e.key.clone(),
            };
            match section.as_str() {
                "run" => match e.key.as_str() {
                    "name" => cfg.name = e.value.clone(),
                    _ => return Err(unknown()),
                },
                "model" => {
                    let v = num(&e)?;
                    *cfg.model.field_mut(&e.key).ok_or_else(unknown)? = v;
                }
                "env" => {
                    let t = &mut cfg.task;
                    match e.key.as_str() {
                        "horizon" => t.horizon = count(&e)?,
                        "restart_prob" => t.restart_prob = num(&e)?,
                        "goal_radius" => t.goal_radius = num(&e)?,
                        "mass_mean" => {
                            t.ensemble.mass_mean = num(&e)?;
                            mass_mean_set = true;
                        }
                        "mass_std" => t.ensemble.mass_std = num(&e)?,
                        "base_pos_std" => t.ensemble.base_pos_std = num(&e)?,
                        "reward_goal" => t.reward.goal = num(&e)?,
                        "reward_fingertip" => t.reward.fingertip = num(&e)?,
                        "reward_control" => t.reward.control = num(&e)?,
                        "proximal_min" => t.joint_limits.proximal.0 = num(&e)?,
                        "proximal_max" => t.joint_limits.proximal.1 = num(&e)?,
                        "distal_min" => t.joint_limits.distal.0 = num(&e)?,
                        "distal_max" => t.joint_limits.distal.1 = num(&e)?,
                        _ => return Err(unknown()),
                    }
                }
                "policy" => match e.key.as_str() {
                    "init_log_std" => cfg.npg.init_log_std = num(&e)?,
                    _ => return Err(unknown()),
                },
                "npg" => match e.key.as_str() {
                    "step_size" => cfg.npg.step_size = num(&e)?,
                    "iterations" => cfg.npg.iterations = count(&e)?,
                    _ => return Err(unknown()),
                },
                "value" => match e.key.as_str() {
                    "gamma" => cfg.value.gamma = num(&e)?,
                    "lambda" => cfg.value.lambda = num(&e)?,
                    "ridge" => cfg.value.ridge = num(&e)?,
                    _ => return Err(unknown()),
                },
                "distributed" => {
                    let d = &mut cfg.distributed;
                    match e.key.as_str() {
                        "listen" => d.listen = e.value.clone(),
                        "workers" => d.workers = count(&e)?,
                        "rollouts_per_worker" => d.rollouts_per_worker = count(&e)?,
                        "base_seed" => d.base_seed = e.value.parse().map_err(|_| bad(&e, "expected a u64"))?,
                        "round_timeout_s" => d.round_timeout_s = num(&e)?,
                        "connect_retries" => {
                            d.connect_retries = e.value.parse().map_err(|_| bad(&e, "expected a u32"))?
                        }
                        "retry_backoff_s" => d.retry_backoff_s = num(&e)?,
                        "calibration_rollouts" => d.calibration_rollouts = count(&e)?,
                        _ => return Err(unknown()),
                    }
                }
                "eval" => {
                    let v = &mut cfg.eval;
                    match e.key.as_str() {
                        "rollouts" => v.rollouts = count(&e)?,
                        "every" => v.every = count(&e)?,
                        "mean_actions" => v.mean_actions = flag(&e)?,
                        "seed" => v.seed = e.value.parse().map_err(|_| bad(&e, "expected a u64"))?,
                        _ => return Err(unknown()),
                    }
                }
                _ => {
                    return Err(ConfigError::UnknownSection {
                        line: e.line,
                        section,
                    })
                }
            }
        }
        if !mass_mean_set {
            cfg.task.ensemble.mass_mean = cfg.model.object_mass;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.model.validate().map_err(|e: ParamsError| ConfigError::Invalid(e.to_string()))?;
        self.task.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.npg.step_size > 0.0) {
            return invalid("npg.step_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.value.gamma) || !(0.0..=1.0).contains(&self.value.lambda) {
            return invalid("value.gamma and value.lambda must lie in [0, 1]".into());
        }
        if !(self.value.ridge >= 0.0) {
            return invalid("value.ridge must be >= 0".into());
        }
        let d = &self.distributed;
        if d.workers == 0 || d.rollouts_per_worker == 0 {
            return invalid("distributed.workers and rollouts_per_worker must be at least 1".into());
        }
        if !(d.round_timeout_s > 0.0) || !(d.retry_backoff_s >= 0.0) {
            return invalid("distributed timeouts must be positive".into());
        }
        if self.eval.rollouts == 0 {
            return invalid("eval.rollouts must be at least 1".into());
        }
        let lim = &self.task.joint_limits;
        if !(lim.proximal.0 <= lim.proximal.1) || !(lim.distal.0 <= lim.distal.1) {
            return invalid("joint limit ranges are inverted".into());
        }
        Ok(())
    }

    pub fn advantage(&self) -> AdvantageConfig {
        AdvantageConfig {
            gamma: self.value.gamma,
            lambda: self.value.lambda,
            horizon: self.task.horizon,
        }
    }

    /// Total rollouts per iteration across all workers.
    pub fn batch_size(&self) -> usize {
        self.distributed.workers * self.distributed.rollouts_per_worker
    }

    /// Canonical text form: every key, in a fixed order, with exact floats.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]\nname = {}\n\n[model]", self.name);
        for (k, v) in self.model.to_pairs() {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let t = &self.task;
        let _ = writeln!(
            s,
            "\n[env]\nhorizon = {}\nrestart_prob = {:?}\ngoal_radius = {:?}\nmass_mean = {:?}\nmass_std = {:?}\nbase_pos_std = {:?}\nreward_goal = {:?}\nreward_fingertip = {:?}\nreward_control = {:?}\nproximal_min = {:?}\nproximal_max = {:?}\ndistal_min = {:?}\ndistal_max = {:?}",
            t.horizon,
            t.restart_prob,
            t.goal_radius,
            t.ensemble.mass_mean,
            t.ensemble.mass_std,
            t.ensemble.base_pos_std,
            t.reward.goal,
            t.reward.fingertip,
            t.reward.control,
            t.joint_limits.proximal.0,
            t.joint_limits.proximal.1,
            t.joint_limits.distal.0,
            t.joint_limits.distal.1,
        );
        let _ = writeln!(s, "\n[policy]\ninit_log_std = {:?}", self.npg.init_log_std);
        let _ = writeln!(
            s,
            "\n[npg]\nstep_size = {:?}\niterations = {}",
            self.npg.step_size, self.npg.iterations
        );
        let v = &self.value;
        let _ = writeln!(s, "\n[value]\ngamma = {:?}\nlambda = {:?}\nridge = {:?}", v.gamma, v.lambda, v.ridge);
        let d = &self.distributed;
        let _ = writeln!(
            s,
            "\n[distributed]\nlisten = {}\nworkers = {}\nrollouts_per_worker = {}\nbase_seed = {}\nround_timeout_s = {:?}\nconnect_retries = {}\nretry_backoff_s = {:?}\ncalibration_rollouts = {}",
            d.listen,
            d.workers,
            d.rollouts_per_worker,
            d.base_seed,
            d.round_timeout_s,
            d.connect_retries,
            d.retry_backoff_s,
            d.calibration_rollouts,
        );
        let e = &self.eval;
        let _ = writeln!(
            s,
            "\n[eval]\nrollouts = {}\nevery = {}\nmean_actions = {}\nseed = {}",
            e.rollouts, e.every, e.mean_actions, e.seed
        );
        s
    }

    /// SHA-256 over the settings that shape the training data and updates.
    ///
    /// The run name, listen address, timeouts and evaluation settings are
    /// excluded; they do not affect what a worker computes.
    pub fn training_hash(&self) -> [u8; 32] {
        let mut c = self.clone();
        c.name = String::new();
        c.distributed.listen = String::new();
        c.distributed.round_timeout_s = 1.0;
        c.distributed.connect_retries = 0;
        c.distributed.retry_backoff_s = 0.0;
        c.eval = RunConfig::default().eval;
        Sha256::digest(c.to_canonical_string().as_bytes()).into()
    }

    pub fn training_hash_hex(&self) -> String {
        self.training_hash().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First eight bytes of [`training_hash`](Self::training_hash).
    pub fn training_hash_u64(&self) -> u64 {
        let h = self.training_hash();
        u64::from_le_bytes(h[..8].try_into().expect("eight bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = RunConfig::default();
        c.name = "x".into();
        c.model.object_mass = 0.4;
        c.task.ensemble = EnsembleConfig {
            mass_mean: 0.4,
            mass_std: 0.03,
            base_pos_std: 0.005,
        };
        c.npg.step_size = 0.1 + 0.2;
        c.eval.mean_actions = true;
        assert_eq!(RunConfig::from_str(&c.to_canonical_string()).unwrap(), c);
    }

    #[test]
    fn model_mass_sets_training_mass() {
        let c = RunConfig::from_str("[model]\nobject_mass = 0.4\n").unwrap();
        assert_eq!(c.task.ensemble.mass_mean, 0.4);
        let c = RunConfig::from_str("[model]\nobject_mass = 0.4\n[env]\nmass_mean = 0.3\n").unwrap();
        assert_eq!(c.task.ensemble.mass_mean, 0.3);
    }

    #[test]
    fn errors_report_lines() {
        let err = RunConfig::from_str("[npg]\nstep_size = 0.1\nstep_sise = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 3, .. }), "{err}");
        let err = RunConfig::from_str("\n[nope]\nx = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { line: 3, .. }), "{err}");
        let err = RunConfig::from_str("[env]\nhorizon = -5\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 2, .. }), "{err}");
        assert!(err.to_string().starts_with("line 2:"));
        let err = RunConfig::from_str("horizon = 5\n").unwrap_err();
        assert!(matches!(err, ConfigError::NoSection { line: 1, .. }));
        let err = RunConfig::from_str("[model]\nobject_mass = 0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn hash_ignores_deployment_but_not_training_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.distributed.listen = "0.0.0.0:1".into();
        b.distributed.round_timeout_s = 7.0;
        b.eval.every = 3;
        assert_eq!(a.training_hash(), b.training_hash());
        b.distributed.rollouts_per_worker = 3;
        assert_ne!(a.training_hash(), b.training_hash());
        b = a.clone();
        b.npg.step_size = 0.06;
        assert_ne!(a.training_hash(), b.training_hash());
        assert_eq!(a.training_hash_hex().len(), 64);
    }
}
