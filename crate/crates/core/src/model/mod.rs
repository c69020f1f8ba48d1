//! The conditional diffusion transformer.
//!
//! Each of the four slots (PPG, ECG, BP, AM) owns a multi-scale convolutional
//! encoder. Encoded slots are concatenated along time into `k * L` tokens and
//! pass through `n_modules` transformer modules. A module adds the diffusion
//! step embedding, runs multi-head self-attention under the task mask, expands
//! to `2C` with `F1` plus the time embedding, applies a tanh-sigmoid gate and
//! projects back to `2C` with `F2`, whose halves feed the residual stream and
//! the skip sum. `F3` maps the skip sum to the final features; the generation
//! slot rows are decoded by the decoder of the target modality (the AM slot
//! borrows it).
//!
//! Two execution paths exist. [`forward`] is the production path: it derives
//! the slot-level block structure of the mask, evaluates only the slots the
//! generation slot can (transitively) attend to, and supports backprop.
//! [`dense`] materializes the `(kL x kL)` additive mask literally and is used
//! as a reference in tests.

mod checkpoint;
pub mod dense;
mod embed;
pub mod forward;
mod mask;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use embed::{diffusion_embedding, sinusoid_table, time_embedding};
pub use dense::{dense_forward, first_module_attention};
pub use forward::{decode, encode_modality, forward_backward, model_forward, BatchInput, Grads};
pub use mask::{build_attention_mask, AttentionMask, SlotLayout};
pub use params::{DecoderParams, EncoderParams, Linear, ModelParams, ModuleParams};

/// Number of slots: PPG, ECG, BP and the auxiliary slot.
pub const N_SLOTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Samples per segment `L`.
    pub seq_len: usize,
    /// Channel width `C`.
    pub channels: usize,
    pub n_modules: usize,
    pub n_heads: usize,
    pub kernel_sizes: Vec<usize>,
    /// Diffusion steps `T`; the diffusion embedding table has `T + 1` rows.
    pub diffusion_steps: usize,
    pub neg_mask_value: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 128,
            channels: 48,
            n_modules: 5,
            n_heads: 4,
            kernel_sizes: vec![1, 3, 5, 7, 9, 11],
            diffusion_steps: 50,
            neg_mask_value: -1e9,
        }
    }
}

impl ModelConfig {
    /// `L = 8, C = 12`, two modules: small enough for finite differences.
    pub fn tiny() -> Self {
        Self {
            seq_len: 8,
            channels: 12,
            n_modules: 2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seq_len == 0 || self.channels == 0 || self.n_modules == 0 || self.n_heads == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.channels % self.n_heads != 0 {
            return bad(format!("channels {} not divisible by n_heads {}", self.channels, self.n_heads));
        }
        if self.kernel_sizes.is_empty() || self.channels % self.kernel_sizes.len() != 0 {
            return bad(format!(
                "channels {} not divisible by the {} kernel sizes",
                self.channels,
                self.kernel_sizes.len()
            ));
        }
        if self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return bad("kernel sizes must be odd for same padding".into());
        }
        if self.channels % 2 != 0 {
            return bad("channels must be even for the sinusoidal time code".into());
        }
        if self.diffusion_steps == 0 {
            return bad("diffusion_steps must be >= 1".into());
        }
        if !(self.neg_mask_value <= -1e9) {
            return bad(format!("neg_mask_value {} must be <= -1e9", self.neg_mask_value));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.n_heads
    }

    pub fn channels_per_kernel(&self) -> usize {
        self.channels / self.kernel_sizes.len()
    }

    pub fn max_kernel(&self) -> usize {
        self.kernel_sizes.iter().copied().max().unwrap_or(1)
    }

    /// Number of learnable scalars, computed from the shapes alone.
    pub fn param_count(&self) -> usize {
        let c = self.channels;
        let cpk = self.channels_per_kernel();
        let encoder: usize = self.kernel_sizes.iter().map(|k| k * cpk + cpk).sum();
        let module = 3 * c * c + (c * c + c) + 2 * (c * 2 * c + 2 * c);
        let decoder = (c * c + c) + (c + 1);
        N_SLOTS * encoder
            + (self.diffusion_steps + 1) * c
            + (c * 2 * c + 2 * c)
            + self.n_modules * module
            + (c * c + c)
            + 3 * decoder
    }
}
