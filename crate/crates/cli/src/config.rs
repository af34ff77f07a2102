use std::path::{Path, PathBuf};

use mren_core::train::TrainConfig;
use mren_core::{Error, ModelConfig, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub hr_dir: Option<PathBuf>,
    /// Keep degraded images in `<hr_dir>/LRx<scale>/`.
    pub cache_lr: bool,
}

/// JSON experiment file with `model`, `train` and `data` sections. Every
/// field is optional; command-line flags override file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            context: format!("cannot read config {}", path.display()),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }
}
