use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::LrSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Teacher-forced oracle latents, answer loss plus alignment.
    Latent,
    /// A learned pause embedding fills the slot; answer loss only.
    Pause,
    /// As `Latent`, with panel B of every input masked out.
    MaskedLatent,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Latent, Variant::Pause, Variant::MaskedLatent];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Latent => "LATENT",
            Variant::Pause => "PAUSE",
            Variant::MaskedLatent => "MASKED_LATENT",
        }
    }

    pub fn masks_input(self) -> bool {
        self == Variant::MaskedLatent
    }

    pub fn aligns(self) -> bool {
        self != Variant::Pause
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (expected LATENT, PAUSE or MASKED_LATENT)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentLoss {
    Mse,
    Cosine,
}

impl LatentLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            LatentLoss::Mse => "mse",
            LatentLoss::Cosine => "cosine",
        }
    }
}

impl FromStr for LatentLoss {
    type Err = Error;
    fn from_str(s: &str) -> Result<LatentLoss> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LatentLoss::Mse),
            "cosine" => Ok(LatentLoss::Cosine),
            _ => Err(Error::Config(format!("unknown latent loss {s:?} (expected mse or cosine)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub num_train_epochs: usize,
    pub learning_rate: f64,
    pub lr_scheduler_type: LrSchedule,
    pub warmup_ratio: f64,
    /// Weight of the latent alignment term.
    pub gamma: f64,
    pub latent_loss_type: LatentLoss,
    pub seed: u64,
    /// Must equal the model's K.
    pub latent_size: usize,
    pub per_device_train_batch_size: usize,
    pub gradient_accumulation_steps: usize,
    pub variant: Variant,
    /// Fraction of training items whose slot is filled with the model's own
    /// free-running latents instead of the oracle ones.
    pub free_running_mix: f64,
    /// Optimizer steps between evaluations; 0 disables step evaluations.
    pub eval_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_train_epochs: 15,
            learning_rate: 1e-3,
            lr_scheduler_type: LrSchedule::Cosine,
            warmup_ratio: 0.05,
            gamma: 0.05,
            latent_loss_type: LatentLoss::Mse,
            seed: 42,
            latent_size: 8,
            per_device_train_batch_size: 16,
            gradient_accumulation_steps: 1,
            variant: Variant::Latent,
            free_running_mix: 0.0,
            eval_steps: 80,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be finite and >= 0");
        }
        if self.num_train_epochs == 0 {
            return bad("num_train_epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1]");
        }
        if self.per_device_train_batch_size == 0 || self.gradient_accumulation_steps == 0 {
            return bad("batch size and gradient accumulation steps must be positive");
        }
        if self.latent_size == 0 {
            return bad("latent_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.free_running_mix) {
            return bad("free_running_mix must lie in [0, 1]");
        }
        Ok(())
    }
}
