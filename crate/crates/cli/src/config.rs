//! Application configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vfxaug::diffusion::{InvertConfig, ScheduleConfig, TrainConfig};
use vfxaug::dit::DiTConfig;
use vfxaug::pipeline::EditConfig;
use vfxaug::planner::PlannerKind;
use vfxaug::vlm::RemoteConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: PathBuf,
    pub checkpoints: PathBuf,
    pub runs: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "work/corpus".into(),
            checkpoints: "work/checkpoints".into(),
            runs: "work/runs".into(),
        }
    }
}

/// Training data: the corpus plus seeded random scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub extra_scenes: usize,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            extra_scenes: vfxaug::corpus::DEFAULT_EXTRA_SCENES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricBackend {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub kind: PlannerKind,
    pub remote: RemoteConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub backend: MetricBackend,
    pub remote: RemoteConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub paths: Paths,
    pub model: DiTConfig,
    pub schedule: ScheduleConfig,
    pub data: DataSection,
    pub train: TrainConfig,
    pub invert: InvertConfig,
    pub edit: EditConfig,
    pub planner: PlannerSection,
    pub metrics: MetricsSection,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: AppConfig = toml::from_str(&text).map_err(|e| vfxaug::Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> vfxaug::Result<()> {
        self.model.validate()?;
        vfxaug::diffusion::NoiseSchedule::new(self.schedule)?;
        self.train.validate()?;
        self.edit.validate()
    }

    /// Applies `--seed` to every seeded stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.train.seed = seed;
        self.data.seed = seed;
        self.edit.noise_seed = seed;
        self.edit.anchors.seed = seed;
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing config")
    }
}
