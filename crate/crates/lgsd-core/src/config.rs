//! Run configuration: one JSON document with optional sections; unknown keys
//! are rejected and missing fields take the documented defaults. The fully
//! resolved form is echoed next to run outputs.

use crate::describer::TemplateId;
use crate::embed::EmbedderConfig;
use crate::env::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriberBackendKind {
    /// Deterministic rule oracle; the default and the test-time ground
    /// truth.
    Rule,
    /// Ablation backend: one constant sentence for every state.
    Constant,
    /// Chat-completions endpoint configured via `LGSD_LLM_*` env vars.
    Llm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriberSection {
    pub backend: DescriberBackendKind,
    pub template: TemplateId,
    /// Discretization resolution for state cells.
    pub rho: f64,
    /// Optional persistent cache location (loaded before, saved after a
    /// run).
    pub cache_path: Option<PathBuf>,
}

impl Default for DescriberSection {
    fn default() -> Self {
        DescriberSection {
            backend: DescriberBackendKind::Rule,
            template: TemplateId::PointHalfPlaneN,
            rho: 0.05,
            cache_path: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkillSection {
    /// Skill dimension D (also the representation output width).
    pub dim: usize,
    /// Slack tolerance in the penalty `min(epsilon, slack)`.
    pub epsilon: f64,
    pub dual_lr: f64,
    pub lambda_init: f64,
    pub repr_lr: f64,
    pub repr_minibatch: usize,
    /// Passes over the buffer per epoch for the representation update.
    pub repr_passes: usize,
    pub psi_lr: f64,
    pub psi_minibatch: usize,
    /// Rescale inferred goal skills to unit norm.
    pub normalize_inferred: bool,
}

impl Default for SkillSection {
    fn default() -> Self {
        SkillSection {
            dim: 2,
            epsilon: 1e-3,
            dual_lr: 0.01,
            lambda_init: 300.0,
            repr_lr: 1e-4,
            repr_minibatch: 256,
            repr_passes: 1,
            psi_lr: 1e-4,
            psi_minibatch: 256,
            normalize_inferred: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub seed: u64,
    /// Hidden widths shared by all four networks ([256, 256, 128] recovers
    /// the full-scale layout).
    pub hidden_sizes: Vec<usize>,
    pub log_std_init: f64,
}

impl Default for TrainerSection {
    fn default() -> Self {
        TrainerSection {
            epochs: 300,
            episodes_per_epoch: 8,
            seed: 0,
            hidden_sizes: vec![64, 64],
            log_std_init: -0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Grid cell size for state-coverage counting.
    pub cell_size: f64,
    /// Goal-reaching success radius.
    pub goal_radius: f64,
    /// Episodes per evaluation rollout set.
    pub episodes: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { cell_size: 0.01, goal_radius: 0.1, episodes: 50 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierSection {
    /// Low-level steps per high-level decision.
    pub steps_per_decision: usize,
    pub goal_radius: f64,
    /// Goal sampling box, per-axis min/max.
    pub goal_min: [f64; 2],
    pub goal_max: [f64; 2],
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub lr: f64,
}

impl Default for HierSection {
    fn default() -> Self {
        HierSection {
            steps_per_decision: 10,
            goal_radius: 0.1,
            goal_min: [-0.8, -0.8],
            goal_max: [0.8, 0.8],
            epochs: 150,
            episodes_per_epoch: 16,
            lr: 3e-4,
        }
    }
}

/// Resolved run configuration. Every field has a default; the JSON document
/// may specify any subset per section.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub describer: DescriberSection,
    pub embedder: EmbedderConfig,
    pub skill: SkillSection,
    pub ppo: PpoConfig,
    pub trainer: TrainerSection,
    pub eval: EvalSection,
    pub hier: HierSection,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.embedder.validate()?;
        self.ppo.validate()?;
        if self.describer.rho <= 0.0 {
            return Err(Error::Config("describer.rho must be positive".into()));
        }
        if self.describer.template.env_kind() != self.env.kind {
            return Err(Error::Config(format!(
                "template {:?} does not match env kind {:?}",
                self.describer.template, self.env.kind
            )));
        }
        if self.skill.dim == 0 {
            return Err(Error::Config("skill.dim must be >= 1".into()));
        }
        if self.skill.epsilon <= 0.0 || self.skill.dual_lr <= 0.0 {
            return Err(Error::Config("skill.epsilon and skill.dual_lr must be positive".into()));
        }
        if self.skill.lambda_init < 0.0 {
            return Err(Error::Config("skill.lambda_init must be >= 0".into()));
        }
        if self.skill.repr_minibatch == 0
            || self.skill.psi_minibatch == 0
            || self.skill.repr_passes == 0
        {
            return Err(Error::Config("skill minibatch sizes and passes must be >= 1".into()));
        }
        if self.trainer.episodes_per_epoch == 0 {
            return Err(Error::Config("trainer.episodes_per_epoch must be >= 1".into()));
        }
        if self.trainer.hidden_sizes.is_empty() {
            return Err(Error::Config("trainer.hidden_sizes must not be empty".into()));
        }
        if self.eval.cell_size <= 0.0 || self.eval.goal_radius < 0.0 {
            return Err(Error::Config("eval.cell_size must be positive".into()));
        }
        if self.hier.steps_per_decision == 0 || self.hier.episodes_per_epoch == 0 {
            return Err(Error::Config("hier steps and episodes must be >= 1".into()));
        }
        for axis in 0..2 {
            if self.hier.goal_min[axis] > self.hier.goal_max[axis] {
                return Err(Error::Config("hier.goal_min must not exceed goal_max".into()));
            }
        }
        Ok(())
    }

    /// Convenience preset for the pusher environment with the two-stage
    /// template.
    pub fn pusher_default() -> Self {
        RunConfig {
            env: EnvConfig { kind: EnvKind::Pusher, ..EnvConfig::default() },
            describer: DescriberSection {
                template: TemplateId::PusherTwoStage,
                ..DescriberSection::default()
            },
            skill: SkillSection { dim: 2, ..SkillSection::default() },
            ..RunConfig::default()
        }
    }

    pub fn to_pretty_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Loads and validates a config file; a missing file is a config error
/// naming the path.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
