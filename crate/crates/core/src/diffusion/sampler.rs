use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::rng::NoiseStream;
use crate::{Result, Tensor};

use super::{clip_prediction, reverse_step, Denoiser, NoiseSchedule};

/// Pixels whose clean value is fixed during sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownPixels {
    /// Row-major `H x W` flags; `true` marks a constrained pixel.
    pub mask: Vec<bool>,
    /// Clean values `[C, H, W]` in the sampler's value space.
    pub values: Tensor,
}

impl KnownPixels {
    pub fn empty(shape: &[usize]) -> Result<Self> {
        let (_, h, w) = Tensor::zeros(shape).dims3()?;
        Ok(Self {
            mask: vec![false; h * w],
            values: Tensor::zeros(shape),
        })
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn check(&self, shape: &[usize]) -> Result<()> {
        let (_, h, w) = self.values.dims3()?;
        if self.values.shape() != shape || self.mask.len() != h * w {
            bail!(InvalidShape, "known pixels {:?} for sample {shape:?}", self.values.shape());
        }
        Ok(())
    }

    /// Replaces constrained pixels of `x` with `√ᾱ·known + √(1−ᾱ)·z`.
    fn impose_noised(&self, x: &mut Tensor, alpha_bar: f64, noise: &mut NoiseStream) {
        let a = math::sqrt(alpha_bar);
        let s = math::sqrt(1.0 - alpha_bar);
        let hw = self.mask.len();
        let vals = self.values.data();
        for (idx, v) in x.data_mut().iter_mut().enumerate() {
            if self.mask[idx % hw] {
                *v = a * vals[idx] + s * noise.normal();
            }
        }
    }

    /// Overwrites constrained pixels of `x` with the known values exactly.
    pub fn impose_exact(&self, x: &mut Tensor) {
        let hw = self.mask.len();
        let vals = self.values.data();
        for (idx, v) in x.data_mut().iter_mut().enumerate() {
            if self.mask[idx % hw] {
                *v = vals[idx];
            }
        }
    }
}

/// Runs the full reverse chain for one `[C, H, W]` sample.
///
/// With `known` pixels, every step first re-noises the constrained pixels
/// from their clean values to the current noise level, and the final sample
/// is overwritten with the clean values so constrained pixels match exactly.
pub fn sample(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    shape: &[usize],
    cond: Option<&Tensor>,
    known: Option<&KnownPixels>,
    noise: &mut NoiseStream,
) -> Result<Tensor> {
    sample_clipped(denoiser, schedule, shape, cond, known, None, noise)
}

/// [`sample`] with every prediction first rewritten so the clean sample it
/// implies lies in `[−limit, limit]` (see [`clip_prediction`]).
pub fn sample_clipped(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    shape: &[usize],
    cond: Option<&Tensor>,
    known: Option<&KnownPixels>,
    clip_x0: Option<f64>,
    noise: &mut NoiseStream,
) -> Result<Tensor> {
    let (c, h, w) = Tensor::zeros(shape).dims3()?;
    if let Some(k) = known {
        k.check(shape)?;
    }
    let cond = match cond {
        Some(cd) => {
            let (cc, ch, cw) = cd.dims3()?;
            if (ch, cw) != (h, w) {
                bail!(InvalidShape, "conditioning {:?} for sample {shape:?}", cd.shape());
            }
            Some(cd.clone().reshape(&[1, cc, h, w])?)
        }
        None => None,
    };
    let target = denoiser.target();
    let mut x = noise.normal_tensor(&[1, c, h, w]);
    for t in (1..=schedule.len()).rev() {
        let info = schedule.step_info(t)?;
        if let Some(k) = known {
            k.impose_noised(&mut x, info.alpha_bar, noise);
        }
        let mut pred = denoiser.predict(&x, &[info], cond.as_ref())?;
        if !pred.is_finite() {
            return Err(crate::Error::Numeric(alloc::format!("denoiser output at step {t}")));
        }
        if let Some(limit) = clip_x0 {
            pred = clip_prediction(&x, &pred, info.alpha_bar, target, limit)?;
        }
        x = reverse_step(schedule, &x, &pred, t, target, noise)?;
    }
    let mut x = x.reshape(&[c, h, w])?;
    if let Some(k) = known {
        k.impose_exact(&mut x);
    }
    Ok(x)
}
