//! Versioned JSON document holding a policy, its whitening and the value
//! baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::policy::{AffineGaussianPolicy, ObsNormalizer, PolicyError, PolicyParams, FLATTEN_ORDER};
use crate::value::ValueParams;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("unsupported parameter layout `{0}`")]
    Layout(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("value baseline has {got} weights, expected {expected}")]
    ValueDimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: u64,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub flatten_order: String,
    pub normalizer: ObsNormalizer,
    pub theta: Vec<f64>,
    pub value: ValueParams,
    /// Hex digest of the run configuration that produced this checkpoint.
    #[serde(default)]
    pub config_hash: String,
}

impl Checkpoint {
    pub fn new(policy: &AffineGaussianPolicy, value: &ValueParams, iteration: u64, config_hash: &str) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            iteration,
            obs_dim: policy.obs_dim(),
            act_dim: policy.act_dim(),
            flatten_order: FLATTEN_ORDER.to_string(),
            normalizer: policy.normalizer.clone(),
            theta: policy.params.flatten(),
            value: value.clone(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn policy(&self) -> Result<AffineGaussianPolicy, CheckpointError> {
        let params = PolicyParams::from_flat(self.obs_dim, self.act_dim, &self.theta)?;
        Ok(AffineGaussianPolicy::new(params, self.normalizer.clone())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(ckpt.version));
        }
        if ckpt.flatten_order != FLATTEN_ORDER {
            return Err(CheckpointError::Layout(ckpt.flatten_order));
        }
        let expected = crate::value::feature_dim(ckpt.obs_dim);
        if ckpt.value.weights.len() != expected {
            return Err(CheckpointError::ValueDimension {
                expected,
                got: ckpt.value.weights.len(),
            });
        }
        ckpt.policy()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::DEFAULT_INIT_LOG_STD;
    use crate::task::{ACT_DIM, OBS_DIM};
    use crate::value::{feature_dim, DEFAULT_RIDGE};
    use proptest::prelude::*;

    fn sample(theta: Vec<f64>, mean: Vec<f64>, std: Vec<f64>, w: Vec<f64>) -> Checkpoint {
        let params = PolicyParams::from_flat(OBS_DIM, ACT_DIM, &theta).unwrap();
        let policy = AffineGaussianPolicy::new(params, ObsNormalizer { mean, std }).unwrap();
        let value = ValueParams {
            weights: w,
            ridge: DEFAULT_RIDGE,
        };
        Checkpoint::new(&policy, &value, 7, "abc")
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn json_round_trip_is_bit_exact(
            theta in prop::collection::vec(-1e3f64..1e3, 108),
            mean in prop::collection::vec(-10.0f64..10.0, 16),
            std in prop::collection::vec(1e-3f64..10.0, 16),
            w in prop::collection::vec(-1e6f64..1e6, 36),
        ) {
            let ckpt = sample(theta, mean, std, w);
            let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
            prop_assert_eq!(back.policy().unwrap().params.flatten(), ckpt.theta.clone());
            prop_assert_eq!(back, ckpt);
        }
    }

    #[test]
    fn rejects_wrong_layout_and_version() {
        let policy = AffineGaussianPolicy::initial(OBS_DIM, ACT_DIM, DEFAULT_INIT_LOG_STD);
        let value = ValueParams::zeros(feature_dim(OBS_DIM), DEFAULT_RIDGE);
        let mut ckpt = Checkpoint::new(&policy, &value, 0, "");
        ckpt.flatten_order = "b,W".into();
        assert!(matches!(Checkpoint::from_json(&ckpt.to_json()), Err(CheckpointError::Layout(_))));
        ckpt.flatten_order = FLATTEN_ORDER.into();
        ckpt.version = 9;
        assert!(matches!(Checkpoint::from_json(&ckpt.to_json()), Err(CheckpointError::Version(9))));
        ckpt.version = CHECKPOINT_VERSION;
        ckpt.theta.pop();
        assert!(matches!(Checkpoint::from_json(&ckpt.to_json()), Err(CheckpointError::Policy(_))));
    }
}
