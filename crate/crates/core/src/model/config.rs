use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1 CT + 7 organ masks + 3 target masks.
pub const DEFAULT_IN_CHANNELS: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Feature width `F` of every hidden layer.
    pub base_width: usize,
    /// Number of scales `S` fused by the attention block.
    pub n_scales: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { in_channels: DEFAULT_IN_CHANNELS, base_width: 8, n_scales: 2, seed: 0 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 1 || self.base_width < 1 || self.n_scales < 2 {
            return Err(Error::Config(format!(
                "model needs in_channels >= 1, base_width >= 1, n_scales >= 2 (got {}, {}, {})",
                self.in_channels, self.base_width, self.n_scales
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count of the architecture.
    pub fn param_count(&self) -> usize {
        let (c, f, s) = (self.in_channels, self.base_width, self.n_scales);
        (f * c * 27 + f) + s * (f * f * 27 + f) + 2 * s + (f + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

/// Step size for synthetic desk-scale runs, where 1e-3 barely moves the
/// model within 30 epochs.
pub const DESK_LEARNING_RATE: f64 = 1e-2;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, momentum: 0.9, batch_size: 1, epochs: 100 }
    }
}

impl TrainConfig {
    pub fn desk(epochs: usize) -> Self {
        TrainConfig { learning_rate: DESK_LEARNING_RATE, epochs, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}
