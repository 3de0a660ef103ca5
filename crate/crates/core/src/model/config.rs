use serde::{Deserialize, Serialize};

use super::ModelError;

/// Architecture of the recursive generator and its encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Branching factor of every expansion stage; its length is the stage count.
    pub k_schedule: Vec<usize>,
    /// Width of the latent code and of every structural representation.
    pub latent_width: usize,
    /// Width of the per-stage child embeddings.
    pub embed_width: usize,
    /// Hidden widths of the shared expansion MLP.
    #[serde(default = "default_mlp_hidden")]
    pub mlp_hidden: Vec<usize>,
    /// Per-point shared MLP widths of the encoder, applied before max-pooling.
    #[serde(default = "default_encoder_hidden")]
    pub encoder_hidden: Vec<usize>,
    /// Encoder emits a mean and a log-variance head.
    #[serde(default)]
    pub vae_mode: bool,
}

fn default_mlp_hidden() -> Vec<usize> {
    vec![256, 256]
}

fn default_encoder_hidden() -> Vec<usize> {
    vec![64, 128, 256]
}

impl GeneratorConfig {
    /// Five stages with branching 8, 4, 4, 4, 4 (2048 leaves).
    pub fn rpg2048() -> Self {
        Self {
            k_schedule: vec![8, 4, 4, 4, 4],
            latent_width: 512,
            embed_width: 64,
            mlp_hidden: default_mlp_hidden(),
            encoder_hidden: default_encoder_hidden(),
            vae_mode: false,
        }
    }

    /// Five stages with branching 5 everywhere (3125 leaves).
    pub fn rpg3125() -> Self {
        Self {
            k_schedule: vec![5; 5],
            ..Self::rpg2048()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "rpg2048" => Some(Self::rpg2048()),
            "rpg3125" => Some(Self::rpg3125()),
            _ => None,
        }
    }

    pub fn stages(&self) -> usize {
        self.k_schedule.len()
    }

    /// Point count of every stage, starting with the single root.
    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![1];
        for &k in &self.k_schedule {
            sizes.push(sizes.last().unwrap() * k);
        }
        sizes
    }

    pub fn leaf_count(&self) -> usize {
        self.k_schedule.iter().product()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.to_string()));
        if self.k_schedule.is_empty() {
            return bad("k_schedule needs at least one stage");
        }
        if self.k_schedule.contains(&0) {
            return bad("every branching factor must be at least 1");
        }
        if self.latent_width == 0 || self.embed_width == 0 {
            return bad("latent_width and embed_width must be positive");
        }
        if self.mlp_hidden.is_empty() || self.mlp_hidden.contains(&0) {
            return bad("mlp_hidden needs at least one positive width");
        }
        if self.encoder_hidden.is_empty() || self.encoder_hidden.contains(&0) {
            return bad("encoder_hidden needs at least one positive width");
        }
        Ok(())
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::rpg2048()
    }
}
