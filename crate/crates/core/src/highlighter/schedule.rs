use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization settings for the highlighter. The learning rate holds at
/// `lr_initial` for `lr_hold_head` epochs, decays geometrically to
/// `lr_final`, then holds there for the last `lr_hold_tail` epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighlighterTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub lr_hold_head: usize,
    pub lr_hold_tail: usize,
    pub optimizer: String,
    pub seed: u64,
    /// Network input (width, height); frames are resized to it.
    pub input_size: (u32, u32),
    /// Encoder weights (safetensors) to start from instead of the seeded init.
    pub encoder_weights: Option<PathBuf>,
}

impl Default for HighlighterTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            lr_initial: 1e-4,
            lr_final: 1e-5,
            lr_hold_head: 25,
            lr_hold_tail: 25,
            optimizer: "adam".into(),
            seed: 0,
            input_size: (640, 480),
            encoder_weights: None,
        }
    }
}

impl HighlighterTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.lr_hold_head + self.lr_hold_tail >= self.epochs {
            return Err(Error::Config(format!(
                "lr holds ({} + {}) must be shorter than {} epochs",
                self.lr_hold_head, self.lr_hold_tail, self.epochs
            )));
        }
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return Err(Error::Config(format!(
                "need 0 < lr_final ({}) <= lr_initial ({})",
                self.lr_final, self.lr_initial
            )));
        }
        if self.optimizer != "adam" {
            return Err(Error::Config(format!("unsupported optimizer {:?}", self.optimizer)));
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::Config("input_size must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate used during `epoch` (0-based).
pub fn lr_at_epoch(config: &HighlighterTrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::Argument(format!(
            "epoch {epoch} outside 0..{}",
            config.epochs
        )));
    }
    if epoch < config.lr_hold_head {
        return Ok(config.lr_initial);
    }
    if epoch >= config.epochs - config.lr_hold_tail {
        return Ok(config.lr_final);
    }
    let span = (config.epochs - config.lr_hold_head - config.lr_hold_tail) as f64;
    let t = (epoch - config.lr_hold_head) as f64 / span;
    Ok(config.lr_initial * (config.lr_final / config.lr_initial).powf(t))
}
