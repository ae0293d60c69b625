//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curriculum::{Arrangement, CommandPool, EpisodeConfig, ObservabilityMode, RandomizationConfig};
use crate::episode::{Controller, RunOptions};
use crate::error::{PlmError, Result};
use crate::policy::{load_params, ActionBounds, EsConfig, MlpShape, PolicyParams, ScriptedConfig};
use crate::rewards::RewardConfig;
use crate::training::{default_schedule, TrainingSetup, TrainingStage};
use crate::world::{PayloadShape, PhysicsParams, DEFAULT_CONTACT_HEIGHT};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub shape: PayloadShape,
    pub n_robots: usize,
    /// Fixed payload mass (kg); the phase range is used when absent.
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default = "default_arrangement")]
    pub arrangement: Arrangement,
    #[serde(default = "default_contact_height")]
    pub contact_height: f64,
}

fn default_arrangement() -> Arrangement {
    Arrangement::Standard
}

fn default_contact_height() -> f64 {
    DEFAULT_CONTACT_HEIGHT
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Scripted,
    RigidOracle,
    Learned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Weights file; required for `learned`.
    #[serde(default)]
    pub params: Option<PathBuf>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Scripted,
            params: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub es: EsConfig,
    pub hidden: usize,
    /// Explicit stage list; the full three-phase anneal schedule is used when absent.
    pub stages: Option<Vec<TrainingStage>>,
    /// Generations per stage of the default schedule.
    pub generations_per_stage: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            es: EsConfig::default(),
            hidden: 64,
            stages: None,
            generations_per_stage: 100,
            checkpoint_every: 10,
        }
    }
}

impl TrainingConfig {
    pub fn schedule(&self) -> Vec<TrainingStage> {
        self.stages
            .clone()
            .unwrap_or_else(|| default_schedule(self.generations_per_stage))
    }
}

/// Everything that determines a run together with the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scene: SceneConfig,
    #[serde(default = "default_phase")]
    pub phase: u8,
    #[serde(default = "ObservabilityMode::cf_plus")]
    pub observability: ObservabilityMode,
    #[serde(default)]
    pub controller: ControllerConfig,
    /// Replaces the phase's command pool when present.
    #[serde(default)]
    pub commands: Option<CommandPool>,
    #[serde(default)]
    pub randomization: RandomizationConfig,
    #[serde(default)]
    pub physics: PhysicsParams,
    #[serde(default)]
    pub rewards: RewardConfig,
    #[serde(default)]
    pub bounds: ActionBounds,
    /// Scripted-controller gains; derived from `physics` when absent.
    #[serde(default)]
    pub scripted: Option<ScriptedConfig>,
    /// Master seed; episode `i` of a batch uses `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn default_phase() -> u8 {
    3
}

fn default_episodes() -> usize {
    500
}

impl ExperimentConfig {
    /// A valid starting point for a team of `n` on `shape`.
    pub fn new(shape: PayloadShape, n_robots: usize) -> Self {
        Self {
            version: CONFIG_VERSION,
            scene: SceneConfig {
                shape,
                n_robots,
                mass: None,
                arrangement: default_arrangement(),
                contact_height: DEFAULT_CONTACT_HEIGHT,
            },
            phase: default_phase(),
            observability: ObservabilityMode::cf_plus(),
            controller: ControllerConfig::default(),
            commands: None,
            randomization: RandomizationConfig::default(),
            physics: PhysicsParams::default(),
            rewards: RewardConfig::default(),
            bounds: ActionBounds::default(),
            scripted: None,
            seed: 0,
            episodes: default_episodes(),
            output_dir: None,
            training: TrainingConfig::default(),
        }
    }

    /// Parses and validates. Relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| PlmError::Config(e.to_string()))?;
        if let Some(p) = &cfg.controller.params {
            if p.is_relative() {
                cfg.controller.params = Some(base_dir.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlmError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, dir).map_err(|e| match e {
            PlmError::Config(m) => PlmError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(PlmError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.episodes == 0 {
            return Err(PlmError::Config("episodes must be at least 1".into()));
        }
        if !(self.scene.contact_height.is_finite() && self.scene.contact_height > 0.0) {
            return Err(PlmError::Config("contact_height must be positive".into()));
        }
        if self.controller.kind == ControllerKind::Learned {
            match &self.controller.params {
                None => return Err(PlmError::Config("learned controller needs a params path".into())),
                Some(p) if !p.is_file() => {
                    return Err(PlmError::Config(format!("params file {} not found", p.display())))
                }
                _ => {}
            }
        }
        if self.training.hidden == 0 {
            return Err(PlmError::Config("training.hidden must be at least 1".into()));
        }
        if self.training.stages.as_ref().is_some_and(|s| s.is_empty()) {
            return Err(PlmError::Config("training.stages must not be empty".into()));
        }
        self.training.es.validate()?;
        self.rewards.validate()?;
        self.bounds.validate()?;
        let setup = self.training_setup()?;
        for stage in &setup.schedule {
            setup.episode_config(stage)?;
        }
        Ok(())
    }

    /// Compact JSON with fields in declaration order.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// The output directory does not change results, so it is left out of the hash.
    fn hashed_json(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        c.canonical_json()
    }

    /// Hex SHA-256 of the canonical JSON without the output directory.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(self.hash_bytes()?))
    }

    pub fn hash_bytes(&self) -> Result<[u8; 32]> {
        Ok(Sha256::digest(self.hashed_json()?.as_bytes()).into())
    }

    pub fn episode_config(&self) -> Result<EpisodeConfig> {
        self.episode_config_for(self.phase, self.observability)
    }

    fn episode_config_for(&self, phase: u8, observability: ObservabilityMode) -> Result<EpisodeConfig> {
        let mut cfg = EpisodeConfig::for_phase(phase, self.scene.shape, self.scene.n_robots)?;
        cfg.mass = self.scene.mass;
        cfg.arrangement = self.scene.arrangement;
        cfg.contact_height = self.scene.contact_height;
        cfg.randomization = self.randomization.clone();
        cfg.observability = observability;
        cfg.physics = self.physics.clone();
        if let Some(pool) = self.commands {
            cfg.phase.command_pool = pool;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scripted_config(&self) -> ScriptedConfig {
        self.scripted.unwrap_or_else(|| ScriptedConfig::from_physics(&self.physics))
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            bounds: self.bounds,
            rewards: self.rewards.clone(),
            record: true,
            stop_on_failure: true,
        }
    }

    /// Builds the controller, loading weights for `learned`.
    pub fn controller(&self) -> Result<Controller> {
        Ok(match self.controller.kind {
            ControllerKind::Scripted => Controller::Scripted(self.scripted_config()),
            ControllerKind::RigidOracle => Controller::RigidOracle,
            ControllerKind::Learned => {
                let path = self
                    .controller
                    .params
                    .as_ref()
                    .ok_or_else(|| PlmError::Config("learned controller needs a params path".into()))?;
                let (_, params) = load_params(path)?;
                Controller::Learned(Arc::new(params))
            }
        })
    }

    pub fn training_setup(&self) -> Result<TrainingSetup> {
        Ok(TrainingSetup {
            base: self.episode_config()?,
            commands: self.commands,
            net: MlpShape::new(self.training.hidden),
            es: self.training.es,
            run: RunOptions {
                record: false,
                ..self.run_options()
            },
            schedule: self.training.schedule(),
        })
    }

    /// Initial weights of a training run.
    pub fn initial_params(&self) -> PolicyParams {
        PolicyParams::init(MlpShape::new(self.training.hidden), self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"version": 1, "scene": {"shape": {"kind": "box", "l": 0.5, "w": 0.4, "h": 0.7}, "n_robots": 2}}"#
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(minimal(), Path::new(".")).unwrap();
        assert_eq!(cfg, ExperimentConfig::new(PayloadShape::small_box(), 2));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal().replace("\"version\": 1", "\"version\": 1, \"extra\": 3");
        assert!(matches!(ExperimentConfig::from_json(&text, Path::new(".")), Err(PlmError::Config(_))));
        let nested = minimal().replace("\"n_robots\": 2", "\"n_robots\": 2, \"robots\": 2");
        assert!(ExperimentConfig::from_json(&nested, Path::new(".")).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("\"n_robots\": 2", "\"n_robots\": 1"),
            ("\"version\": 1", "\"version\": 2"),
        ] {
            let text = minimal().replace(from, to);
            assert!(ExperimentConfig::from_json(&text, Path::new(".")).is_err(), "{to}");
        }
        let mut cfg = ExperimentConfig::new(PayloadShape::small_box(), 2);
        cfg.controller.kind = ControllerKind::Learned;
        assert!(cfg.validate().is_err());
        cfg.controller.params = Some("/nonexistent/weights.bin".into());
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(PayloadShape::small_box(), 2);
        cfg.phase = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::new(PayloadShape::small_box(), 2);
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        let back = ExperimentConfig::from_json(&a.canonical_json().unwrap(), Path::new(".")).unwrap();
        assert_eq!(back.hash().unwrap(), a.hash().unwrap());
    }

    #[test]
    fn command_override_applies() {
        let mut cfg = ExperimentConfig::new(PayloadShape::small_box(), 2);
        cfg.commands = Some(CommandPool::zero());
        assert_eq!(cfg.episode_config().unwrap().phase.command_pool, CommandPool::zero());
    }
}
