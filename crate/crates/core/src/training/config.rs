use serde::{Deserialize, Serialize};

/// Hyperparameters of the decoupled-weight-decay Adam update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Learning-rate schedule over the epochs of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `learning_rate` towards zero at the last epoch.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the scale regulariser.
    pub lambda: f64,
    /// Weight of the KL term (VAE mode only), reached after the warm-up.
    pub beta: f64,
    /// Fraction of the epochs over which the KL weight ramps linearly up to `beta`.
    pub kl_warmup: f64,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub adamw: AdamWConfig,
    pub epochs: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables periodic saves).
    pub save_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 5e-5,
            beta: 1e-3,
            kl_warmup: 0.1,
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Constant,
            batch_size: 64,
            adamw: AdamWConfig::default(),
            epochs: 100,
            seed: 0,
            save_every: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate used during epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let t = epoch as f64 / self.epochs.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }

    /// KL weight used during epoch `epoch` (0-based).
    pub fn beta_at(&self, epoch: usize) -> f64 {
        let warm = (self.kl_warmup * self.epochs as f64).ceil();
        if warm <= 0.0 {
            return self.beta;
        }
        self.beta * ((epoch + 1) as f64 / warm).min(1.0)
    }
}
