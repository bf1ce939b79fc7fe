//! Discretized variance-preserving diffusion: forward corruption, training
//! targets, ancestral reverse sampling and analytic-score oracles.

mod oracle;
mod process;
mod sampler;
mod schedule;
mod train;

pub use oracle::{analytic_gaussian_score, GaussianOracle, PointMassOracle, WithConditioning};
pub use process::{
    clip_prediction, eps_from_prediction, forward_diffuse, forward_diffuse_with, prediction_from_eps, predict_x0,
    predict_x0_with, reverse_step, training_target, training_target_with,
};
pub use sampler::{sample, sample_clipped, KnownPixels};
pub use schedule::{c_noise_embedding, NoiseSchedule, ScheduleKind};
pub use train::{train_epoch, train_step, TrainBatch, TrainableModel, Trainer};

use crate::{Result, Tensor};

/// What the denoiser's output means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictionTarget {
    /// The injected noise.
    Epsilon,
    /// The velocity `√ᾱ·ε − √(1−ᾱ)·x0`.
    V,
}

/// Extra input channels a denoiser expects next to `x_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Conditioning {
    /// Number of 3-channel conditioning images (low-res input, context window).
    pub images: usize,
    /// Whether a known-pixel mask plus known values are supplied.
    pub inpaint_mask: bool,
}

impl Conditioning {
    pub const NONE: Conditioning = Conditioning {
        images: 0,
        inpaint_mask: false,
    };

    pub fn is_none(&self) -> bool {
        self.images == 0 && !self.inpaint_mask
    }

    /// Channel count of the conditioning tensor for `channels`-channel images.
    pub fn channels(&self, channels: usize) -> usize {
        self.images * channels + if self.inpaint_mask { 1 + channels } else { 0 }
    }
}

/// Where in the chain a prediction is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Normalized time in (0, 1]; the value fed to the timestep embedding.
    pub time: f64,
    pub alpha_bar: f64,
}

/// Anything that can play the network inside the reverse chain.
pub trait Denoiser: Send + Sync {
    fn target(&self) -> PredictionTarget;

    fn conditioning(&self) -> Conditioning {
        Conditioning::NONE
    }

    /// `x_t` is `[N, C, H, W]`, `steps` has one entry per batch item and
    /// `cond`, when the denoiser is conditioned, is `[N, Cc, H, W]`.
    fn predict(&self, x_t: &Tensor, steps: &[StepInfo], cond: Option<&Tensor>) -> Result<Tensor>;
}
