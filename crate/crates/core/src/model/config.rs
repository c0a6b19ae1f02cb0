use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::sha256_hex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
    pub max_seq_len: usize,
    /// Number of latent steps K.
    pub latent_size: usize,
    /// Side of one image panel in cells.
    pub panel: usize,
    /// Standard deviation of the token embedding initialisation.
    pub token_init_std: f64,
    /// Seed of the frozen grid encoder.
    pub encoder_seed: u64,
    /// Latents are read after the final layer norm (otherwise from the
    /// residual stream before it).
    pub align_after_final_norm: bool,
    /// Pause slots use K distinct learned vectors instead of one repeated token.
    pub distinct_pause_slots: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            ff_mult: 4,
            max_seq_len: 32,
            latent_size: 8,
            panel: 8,
            token_init_std: 0.1,
            encoder_seed: 7,
            align_after_final_norm: true,
            distinct_pause_slots: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.n_layers == 0 || self.ff_mult == 0 {
            return bad("n_layers and ff_mult must be positive");
        }
        if self.latent_size == 0 {
            return bad("latent_size must be at least 1");
        }
        if self.panel < 6 {
            return bad("panel must be at least 6 cells to hold a hexomino");
        }
        if (self.panel * self.panel) % self.latent_size != 0 {
            return bad("panel cells must split evenly into latent_size groups");
        }
        if !(self.token_init_std.is_finite() && self.token_init_std > 0.0) {
            return bad("token_init_std must be positive");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
