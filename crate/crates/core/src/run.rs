//! The TOML run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{SplitSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::net::{AlignMode, ModelConfig, Scale};
use crate::train::TrainConfig;

/// Architecture choice: a size preset plus the ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub scale: Scale,
    pub align_mode: AlignMode,
    pub use_hfm: bool,
    pub use_circular_pad: bool,
    pub use_channel_attention: bool,
    pub use_vit: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            scale: Scale::Full,
            align_mode: AlignMode::Implicit,
            use_hfm: true,
            use_circular_pad: true,
            use_channel_attention: true,
            use_vit: true,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            align_mode: self.align_mode,
            use_hfm: self.use_hfm,
            use_circular_pad: self.use_circular_pad,
            use_channel_attention: self.use_channel_attention,
            use_vit: self.use_vit,
            ..ModelConfig::preset(self.scale)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub synth: SynthConfig,
    pub split: SplitSpec,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.resolve()?;
        self.synth.validate()?;
        self.split.validate()?;
        self.loss.validate()?;
        self.train.validate()
    }

    /// A configuration whose synthesis sizes match the given preset.
    pub fn for_scale(scale: Scale) -> Self {
        let m = ModelConfig::preset(scale);
        RunConfig {
            model: ModelSection { scale, ..ModelSection::default() },
            synth: SynthConfig { erp_height: m.erp_height, face_size: m.face_size, ..SynthConfig::default() },
            ..RunConfig::default()
        }
    }
}
