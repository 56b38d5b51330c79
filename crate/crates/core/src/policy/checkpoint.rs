use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PolicyConfig, PolicyParams};
use crate::consequences::{DEMAND_RATIO_CAP, SLACK_FLOOR};
use crate::error::{Error, Result};
use crate::instances::Task;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Feature scaling conventions baked into a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub time_scale: String,
    pub distance_scale: String,
    pub slack_floor: f64,
    pub demand_ratio_cap: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            time_scale: "horizon".into(),
            distance_scale: "instance_diameter".into(),
            slack_floor: SLACK_FLOOR,
            demand_ratio_cap: DEMAND_RATIO_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub task: Task,
    /// Dimensions and variant flags.
    pub config: PolicyConfig,
    pub params: Vec<f64>,
    pub normalization: Normalization,
}

impl Checkpoint {
    pub fn from_params(params: &PolicyParams) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            task: params.config.task,
            config: params.config.clone(),
            params: params.data.clone(),
            normalization: Normalization::default(),
        }
    }

    pub fn into_params(self) -> Result<PolicyParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.task != self.config.task {
            return Err(Error::Checkpoint("task field disagrees with config".into()));
        }
        if self.normalization != Normalization::default() {
            return Err(Error::Checkpoint(
                "checkpoint uses different feature normalization".into(),
            ));
        }
        PolicyParams::from_flat(self.config, self.params)
    }
}

impl PolicyParams {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint::from_params(self))?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.into_params()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_json(&std::fs::read_to_string(path)?)
    }

    /// Loads a checkpoint and requires its dimensions to match `expected`.
    pub fn load_matching(path: &Path, expected: &PolicyConfig) -> Result<Self> {
        let p = Self::load(path)?;
        let c = &p.config;
        let dims = |c: &PolicyConfig| {
            (
                c.task,
                c.d_model,
                c.layers,
                c.heads,
                c.ff_hidden,
                c.mod_hidden,
                c.cand_hidden,
                c.code_dim,
            )
        };
        if dims(c) != dims(expected) {
            return Err(Error::Checkpoint(format!(
                "dimension mismatch: checkpoint {:?}, expected {:?}",
                dims(c),
                dims(expected)
            )));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let p = PolicyParams::new(PolicyConfig::small(Task::Cvrp, 8), 1).unwrap();
        let q = PolicyParams::from_checkpoint_json(&p.to_checkpoint_json().unwrap()).unwrap();
        assert_eq!(p, q);
        let v: serde_json::Value = serde_json::from_str(&p.to_checkpoint_json().unwrap()).unwrap();
        for key in ["version", "task", "config", "params", "normalization"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn mismatched_dims_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        PolicyParams::new(PolicyConfig::small(Task::Tsp, 8), 1)
            .unwrap()
            .save(&path)
            .unwrap();
        assert!(PolicyParams::load_matching(&path, &PolicyConfig::small(Task::Tsp, 8)).is_ok());
        assert!(matches!(
            PolicyParams::load_matching(&path, &PolicyConfig::small(Task::Tsp, 4)),
            Err(Error::Checkpoint(_))
        ));
    }
}
