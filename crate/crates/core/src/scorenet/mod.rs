//! Miniature convolutional denoiser.
//!
//! A residual encoder/decoder with skip connections. The timestep enters as
//! a sinusoidal embedding that is projected to a per-channel bias in every
//! residual block; conditioning images and inpainting constraints enter as
//! extra input channels concatenated to `x_t`.

mod condition;
mod net;

pub use condition::ConditionInput;
pub use net::ScoreNet;

use crate::diffusion::{Conditioning, PredictionTarget};
use crate::error::bail;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNetConfig {
    /// Square input resolution in pixels.
    pub resolution: usize,
    pub channels: usize,
    pub base_width: usize,
    /// Encoder/decoder depth; width doubles at each level.
    pub levels: usize,
    pub groups: usize,
    pub embed_dim: usize,
    pub conditioning: Conditioning,
    pub target: PredictionTarget,
}

impl ScoreNetConfig {
    pub fn new(resolution: usize, conditioning: Conditioning, target: PredictionTarget) -> Self {
        Self {
            resolution,
            channels: 3,
            base_width: 16,
            levels: 2,
            groups: 4,
            embed_dim: 32,
            conditioning,
            target,
        }
    }

    pub fn with_width(mut self, base_width: usize) -> Self {
        self.base_width = base_width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.resolution;
        if r < 8 || r % 8 != 0 || !(r / 8).is_power_of_two() {
            bail!(Config, "resolution {r} is not 8 times a power of two");
        }
        if self.levels == 0 || r % (1 << (self.levels - 1)) != 0 {
            bail!(Config, "{} levels do not divide resolution {r}", self.levels);
        }
        if self.channels == 0 || self.base_width == 0 {
            bail!(Config, "zero channels or width");
        }
        if self.groups == 0 || self.base_width % self.groups != 0 {
            bail!(Config, "width {} not divisible into {} groups", self.base_width, self.groups);
        }
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            bail!(Config, "embedding dimension {} must be even", self.embed_dim);
        }
        Ok(())
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_width << level
    }

    pub fn cond_channels(&self) -> usize {
        self.conditioning.channels(self.channels)
    }
}
