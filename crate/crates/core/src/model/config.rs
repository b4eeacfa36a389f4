use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::NUM_PATCHES;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("num_layers must be at least 1")]
    NoLayers,
    #[error("hidden_dim must be at least 1")]
    ZeroDim,
    #[error("num_heads must be at least 1")]
    ZeroHeads,
    #[error("hidden_dim {dim} is not divisible by num_heads {heads}")]
    HeadSplit { dim: usize, heads: usize },
    #[error("num_classes must be at least 2, got {0}")]
    TooFewClasses(usize),
    #[error("ffn_ratio must be at least 1")]
    ZeroFfn,
    #[error("K={k} at layer {layer} is outside 1..{max}", max = NUM_PATCHES)]
    NeighborCount { layer: usize, k: usize },
}

/// Hyperparameters of the isotropic model.
///
/// `k_end`, when set, turns the neighbor count into a linear schedule from
/// `k` at layer 1 to `k_end` at layer `num_layers` (rounded half up).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub k: usize,
    pub k_end: Option<usize>,
    pub num_classes: usize,
    pub num_heads: usize,
    pub ffn_ratio: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 16,
            hidden_dim: 64,
            k: 9,
            k_end: None,
            num_classes: 10,
            num_heads: 1,
            ffn_ratio: 4,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_layers == 0 {
            return Err(ConfigError::NoLayers);
        }
        if self.hidden_dim == 0 {
            return Err(ConfigError::ZeroDim);
        }
        if self.num_heads == 0 {
            return Err(ConfigError::ZeroHeads);
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(ConfigError::HeadSplit {
                dim: self.hidden_dim,
                heads: self.num_heads,
            });
        }
        if self.num_classes < 2 {
            return Err(ConfigError::TooFewClasses(self.num_classes));
        }
        if self.ffn_ratio == 0 {
            return Err(ConfigError::ZeroFfn);
        }
        for layer in 1..=self.num_layers {
            let k = self.k_at(layer);
            if k == 0 || k >= NUM_PATCHES {
                return Err(ConfigError::NeighborCount { layer, k });
            }
        }
        Ok(())
    }

    /// Neighbor count used by layer `layer` (1-based).
    pub fn k_at(&self, layer: usize) -> usize {
        match self.k_end {
            None => self.k,
            Some(_) if self.num_layers == 1 => self.k,
            Some(end) => {
                let span = end as i64 - self.k as i64;
                let step = (layer.clamp(1, self.num_layers) - 1) as i64;
                let denom = (self.num_layers - 1) as i64;
                // round half away from zero
                let num = span * step * 2;
                let offset = if num >= 0 {
                    (num + denom) / (2 * denom)
                } else {
                    -((-num + denom) / (2 * denom))
                };
                (self.k as i64 + offset) as usize
            }
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.hidden_dim * self.ffn_ratio
    }

    /// True when both configs describe the same weight shapes.
    pub fn same_shapes(&self, other: &ModelConfig) -> bool {
        self.num_layers == other.num_layers
            && self.hidden_dim == other.hidden_dim
            && self.num_classes == other.num_classes
            && self.num_heads == other.num_heads
            && self.ffn_ratio == other.ffn_ratio
    }
}
