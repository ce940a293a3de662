//! Scenario files: one JSON document describing a complete experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sysid_core::identify::{CmaConfig, GdSettings};
use sysid_core::model::{ParamLayout, RobotModel};
use sysid_core::traj::{Excitation, ExcitationProfile, NoiseSpec, PerturbationSetting};
use sysid_core::LossSpec;

use crate::error::{CliError, CliResult};

/// A named preset (`"setting1"` .. `"setting3"`) or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerturbationChoice {
    Preset(String),
    Inline(PerturbationSetting),
}

impl PerturbationChoice {
    pub fn resolve(&self) -> CliResult<PerturbationSetting> {
        match self {
            PerturbationChoice::Inline(p) => Ok(p.clone()),
            PerturbationChoice::Preset(name) => {
                let n = name
                    .strip_prefix("setting")
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| CliError::Config(format!("unknown perturbation preset '{name}'")))?;
                PerturbationSetting::preset(n).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutChoice {
    /// Upper-body links plus every joint.
    Default,
    /// Every movable link plus every joint.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub fragment_count: usize,
    pub horizon: usize,
}

/// Stance-foot correction applied by `process`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FootSettings {
    pub target_height: f64,
    /// Joints moved by the correction; empty selects the lower-body chain
    /// leading to the free foot.
    pub active_joints: Vec<String>,
}

impl Default for FootSettings {
    fn default() -> Self {
        FootSettings {
            target_height: 0.0,
            active_joints: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Relative paths are resolved against the config file's directory.
    pub model_path: PathBuf,
    pub perturbation: PerturbationChoice,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// One unloaded and one loaded trajectory is recorded per entry.
    pub excitations: Vec<Excitation>,
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default = "default_layout")]
    pub layout: LayoutChoice,
    /// Links whose mass and CoM are refitted on loaded data.
    #[serde(default = "default_payload")]
    pub payload_links: Vec<String>,
    #[serde(default)]
    pub gd: GdSettings,
    /// Overrides `gd` for the base-calibration stage.
    #[serde(default)]
    pub gd_stage1: Option<GdSettings>,
    #[serde(default)]
    pub cma: CmaConfig,
    #[serde(default)]
    pub foot: FootSettings,
    pub output_dir: PathBuf,
}

fn default_layout() -> LayoutChoice {
    LayoutChoice::Default
}

fn default_payload() -> Vec<String> {
    vec!["torso".into(), "left_hand".into(), "right_hand".into()]
}

impl ScenarioConfig {
    /// Parses and validates a scenario; relative paths become relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.model_path.is_relative() {
            cfg.model_path = base.join(&cfg.model_path);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !self.model_path.is_file() {
            return Err(CliError::Config(format!(
                "model file not found: {}",
                self.model_path.display()
            )));
        }
        if self.excitations.is_empty() {
            return Err(CliError::Config("at least one excitation is required".into()));
        }
        if self.sampler.fragment_count == 0 || self.sampler.horizon == 0 {
            return Err(CliError::Config("fragment_count and horizon must be at least 1".into()));
        }
        self.perturbation.resolve()?;
        self.loss.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.cma.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.payload_links.is_empty() {
            return Err(CliError::Config("payload_links is empty".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> CliResult<RobotModel> {
        if !self.model_path.is_file() {
            return Err(CliError::Config(format!(
                "model file not found: {}",
                self.model_path.display()
            )));
        }
        RobotModel::load(&self.model_path).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn layout(&self, model: &RobotModel) -> ParamLayout {
        match self.layout {
            LayoutChoice::Default => ParamLayout::default_for(model),
            LayoutChoice::Full => ParamLayout::full(model),
        }
    }

    pub fn payload_link_indices(&self, model: &RobotModel) -> CliResult<Vec<usize>> {
        self.payload_links
            .iter()
            .map(|n| {
                model
                    .link_index(n)
                    .ok_or_else(|| CliError::Config(format!("payload link '{n}' is not in the model")))
            })
            .collect()
    }

    pub fn foot_joints(&self, model: &RobotModel) -> CliResult<Vec<usize>> {
        if self.foot.active_joints.is_empty() {
            return Ok(model.foot_chain_joints());
        }
        self.foot
            .active_joints
            .iter()
            .map(|n| {
                model
                    .joint_index(n)
                    .ok_or_else(|| CliError::Config(format!("foot joint '{n}' is not in the model")))
            })
            .collect()
    }

    /// Applies the global `--seed` override to every stochastic component.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.noise.seed = s;
            self.cma.seed = s;
        }
        self
    }

    pub fn stage1_settings(&self) -> GdSettings {
        self.gd_stage1.unwrap_or(self.gd)
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.output_dir.join("raw")
    }

    pub fn processed_dir(&self) -> PathBuf {
        self.output_dir.join("processed")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.output_dir.join("ground_truth.json")
    }
}

/// Three multi-sine excitations with distinct phases.
pub fn default_excitations(duration: f64) -> Vec<Excitation> {
    (0..3)
        .map(|v| Excitation {
            variant: v,
            ..Excitation::new(ExcitationProfile::MultiSine, duration)
        })
        .collect()
}
