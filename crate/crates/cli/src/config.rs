//! TOML run configuration.
//!
//! ```toml
//! preset = "rpg2048"        # used when [generator] is absent
//!
//! [generator]               # GeneratorConfig fields
//! k_schedule = [4, 4, 4]
//! latent_width = 64
//! embed_width = 32
//!
//! [train]                   # TrainConfig fields, all optional
//! epochs = 200
//! learning_rate = 1e-3
//! ```

use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Deserialize;

use rpg_core::model::GeneratorConfig;
use rpg_core::training::TrainConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub generator: Option<GeneratorConfig>,
    pub train: Option<TrainConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Generator from the `[generator]` table, else the named preset, else the default.
    pub fn generator(&self, preset_override: Option<&str>) -> anyhow::Result<GeneratorConfig> {
        if let Some(name) = preset_override {
            return preset(name);
        }
        match (&self.generator, &self.preset) {
            (Some(g), _) => Ok(g.clone()),
            (None, Some(name)) => preset(name),
            (None, None) => Ok(GeneratorConfig::default()),
        }
    }
}

pub fn preset(name: &str) -> anyhow::Result<GeneratorConfig> {
    GeneratorConfig::preset(name).ok_or_else(|| anyhow!("unknown preset {name:?} (expected rpg2048 or rpg3125)"))
}
