//! Versioned checkpoint serialization. Parameters are stored as nested
//! arrays of 64-bit floats; files round-trip bit-exactly.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::ppo::Policy;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointParams {
    pub pi: Policy,
    pub v: Mlp,
    pub phi: Mlp,
    pub psi: Mlp,
}

/// Serialized RNG positions: the master seed plus per-stream word positions
/// of the counter-based generators.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub rollout_word_pos: String,
    pub update_word_pos: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    pub lambda: f64,
    pub params: CheckpointParams,
    pub rng: RngState,
    pub epoch: u64,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        self.params.pi.validate()?;
        self.params.v.validate()?;
        self.params.phi.validate()?;
        self.params.psi.validate()?;
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!("invalid lambda {}", self.lambda)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(json)?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    /// Short content id used to label derived artifacts.
    pub fn content_id(&self) -> Result<String> {
        let json = self.to_json()?;
        Ok(format!("{:016x}", crate::embed::fnv1a64(json.as_bytes())))
    }
}

/// Checkpoint for the downstream hierarchical controller.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HierCheckpoint {
    pub version: u32,
    pub kind: String,
    pub config: RunConfig,
    pub params: HierParams,
    pub low_checkpoint_id: String,
    pub epoch: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HierParams {
    pub pi_high: Policy,
    pub v_high: Mlp,
}

impl HierCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let ckpt: HierCheckpoint = serde_json::from_str(&json)?;
        if ckpt.version != CHECKPOINT_VERSION || ckpt.kind != "hier" {
            return Err(Error::Config("not a hierarchical checkpoint".into()));
        }
        Ok(ckpt)
    }
}
