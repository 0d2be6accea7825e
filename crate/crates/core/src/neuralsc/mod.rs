//! Trainable semantic transceiver: a shared convolutional encoder run at
//! every sensor, a power-normalized complex symbol vector per sensor,
//! over-the-air aggregation, and a residual MLP decoder at the FC.
//!
//! Everything runs in `f64` with hand-written backward passes; there is no
//! general autodiff tape.

mod checkpoint;
mod layers;
mod model;
mod tensor;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::sigmoid;
pub use model::{covariance_to_input, AdamState, Gradients, ModelParams};
pub use tensor::Tensor;
pub use train::{
    batch_loss, bce_loss, forward_train, loss_and_gradients, train, train_with_progress, Adam, SlotChannel, TrainConfig, TrainLog,
    TrainStep, BCE_EPSILON,
};

/// Layer sizes of the transceiver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    /// Antennas per sensor; the encoder input is `2 x m x m`.
    pub m: usize,
    /// Output channels of each inception block. Each block halves the spatial size.
    pub block_channels: Vec<usize>,
    /// Kernel sizes of the parallel depthwise branches inside a block.
    pub kernel_sizes: Vec<usize>,
    /// Output width of each decoder residual block.
    pub residual_widths: Vec<usize>,
    /// Complex symbols per sensor (D).
    pub symbols: usize,
    /// Upper bound on D.
    pub symbol_budget: usize,
}

impl Arch {
    /// Full-size layout: blocks 4/8/16, kernels 3/5/7, widths 32..16, D = 8.
    pub fn table_one(m: usize) -> Self {
        Self {
            m,
            block_channels: vec![4, 8, 16],
            kernel_sizes: vec![3, 5, 7],
            residual_widths: vec![32, 64, 128, 64, 32, 16],
            symbols: 8,
            symbol_budget: 8,
        }
    }

    /// Same encoder with a narrower three-block decoder, for quick runs.
    pub fn desk(m: usize) -> Self {
        Self { residual_widths: vec![32, 32, 16], ..Self::table_one(m) }
    }

    /// One inception block and two residual blocks; used by gradient checks.
    pub fn miniature(m: usize) -> Self {
        Self {
            m,
            block_channels: vec![4],
            kernel_sizes: vec![3, 5],
            residual_widths: vec![6, 4],
            symbols: 2,
            symbol_budget: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let blocks = self.block_channels.len();
        if blocks == 0 {
            problems.push("encoder needs at least one block".to_string());
        } else if blocks >= usize::BITS as usize || self.m < (1usize << blocks) {
            problems.push(format!("m = {} is too small for {blocks} stride-2 blocks (need m >= {})", self.m, 1u64 << blocks.min(63)));
        }
        if self.block_channels.contains(&0) {
            problems.push("block channel counts must be positive".to_string());
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            problems.push(format!("kernel sizes must be odd and nonempty, got {:?}", self.kernel_sizes));
        }
        if self.residual_widths.is_empty() || self.residual_widths.contains(&0) {
            problems.push("decoder needs at least one residual block of positive width".to_string());
        }
        if self.symbols == 0 {
            problems.push("symbols must be at least 1".to_string());
        }
        if self.block_channels.last().copied() != Some(2 * self.symbols) {
            problems.push(format!(
                "last block width {:?} must equal 2 * symbols = {}",
                self.block_channels.last(),
                2 * self.symbols
            ));
        }
        if self.symbols > self.symbol_budget {
            problems.push(format!("symbols {} exceed the budget {}", self.symbols, self.symbol_budget));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Spatial side length entering each block, followed by the final one.
    pub fn spatial_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.m];
        for _ in &self.block_channels {
            let last = *sizes.last().expect("nonempty");
            sizes.push(last.div_ceil(2));
        }
        sizes
    }
}
