use alloc::vec::Vec;

use crate::diffusion::{sample_clipped, Conditioning, Denoiser, KnownPixels, NoiseSchedule};
use crate::error::bail;
use crate::rng::NoiseStream;
use crate::scorenet::ConditionInput;
use crate::{Result, Tensor};

/// One model of a cascade with its sampling chain.
#[derive(Clone, Copy)]
pub struct CdmModel<'a> {
    pub denoiser: &'a dyn Denoiser,
    pub schedule: &'a NoiseSchedule,
    pub resolution: usize,
}

/// Base model followed by two super-resolution models.
#[derive(Clone, Copy)]
pub struct Cdm<'a> {
    pub models: [CdmModel<'a>; 3],
}

/// Conditioning the model at `slot` (0 = base) of a cascade must declare.
pub fn expected_conditioning(slot: usize, with_context: bool) -> Conditioning {
    Conditioning {
        images: usize::from(slot > 0) + usize::from(with_context),
        inpaint_mask: with_context,
    }
}

impl<'a> Cdm<'a> {
    pub fn resolutions(&self) -> [usize; 3] {
        [self.models[0].resolution, self.models[1].resolution, self.models[2].resolution]
    }

    pub fn output_resolution(&self) -> usize {
        self.models[2].resolution
    }

    pub fn validate(&self, with_context: bool) -> Result<()> {
        let [r0, r1, r2] = self.resolutions();
        if r0 == 0 || !(r0 < r1 && r1 < r2) || r1 % r0 != 0 || r2 % r1 != 0 {
            bail!(Config, "cascade resolutions {r0} -> {r1} -> {r2} must grow by integer factors");
        }
        for (slot, m) in self.models.iter().enumerate() {
            let want = expected_conditioning(slot, with_context);
            if m.denoiser.conditioning() != want {
                bail!(
                    Config,
                    "cascade model {slot} declares {:?}, expected {want:?}",
                    m.denoiser.conditioning()
                );
            }
        }
        Ok(())
    }
}

/// Block-averages a constraint to a coarser grid; a coarse pixel is known
/// only when its whole block is.
pub fn downsample_known(known: &KnownPixels, resolution: usize) -> Result<KnownPixels> {
    let (c, h, w) = known.values.dims3()?;
    if h == resolution && w == resolution {
        return Ok(known.clone());
    }
    if h != w || h % resolution != 0 {
        bail!(InvalidShape, "cannot reduce {h}x{w} constraint to {resolution}");
    }
    let f = h / resolution;
    let mut out = KnownPixels::empty(&[c, resolution, resolution])?;
    let src = known.values.data();
    let dst = out.values.data_mut();
    for by in 0..resolution {
        for bx in 0..resolution {
            let full = (0..f * f).all(|k| known.mask[(by * f + k / f) * w + bx * f + k % f]);
            if !full {
                continue;
            }
            out.mask[by * resolution + bx] = true;
            for ch in 0..c {
                let mut sum = 0.0;
                for k in 0..f * f {
                    sum += src[(ch * h + by * f + k / f) * w + bx * f + k % f];
                }
                dst[(ch * resolution + by) * resolution + bx] = sum / (f * f) as f64;
            }
        }
    }
    Ok(out)
}

fn mask_tensor(known: &KnownPixels, resolution: usize) -> Result<Tensor> {
    Tensor::new(
        &[1, resolution, resolution],
        known.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
    )
}

/// Samples the cascade once. `context` (`[C, P, P]`, image space) is given
/// for tiled stages; `known` (image space, output resolution) constrains
/// pixels at every level of the cascade. Returns `[C, r2, r2]` in `[0, 1]`.
///
/// Models work in `[−1, 1]`, and every reverse step clips the predicted
/// clean image to that range.
pub fn run_cdm(
    cdm: &Cdm<'_>,
    channels: usize,
    context: Option<&Tensor>,
    known: Option<&KnownPixels>,
    seed: u64,
) -> Result<Tensor> {
    cdm.validate(context.is_some())?;
    let r2 = cdm.output_resolution();
    if let Some(k) = known {
        if k.values.shape() != [channels, r2, r2] {
            bail!(InvalidShape, "known values {:?} for {r2}px output", k.values.shape());
        }
    }
    let mut rng = NoiseStream::new(seed);
    let mut prev: Option<Tensor> = None;
    for m in &cdm.models {
        let r = m.resolution;
        let known_r = match known {
            Some(k) => Some(downsample_known(k, r)?),
            None => None,
        };
        let mut images: Vec<Tensor> = Vec::new();
        if let Some(p) = &prev {
            images.push(p.clone());
        }
        if let Some(c) = context {
            images.push(c.clone());
        }
        let conditioning = m.denoiser.conditioning();
        let cond = if conditioning.is_none() {
            None
        } else {
            let input = ConditionInput {
                images,
                mask: match (&known_r, conditioning.inpaint_mask) {
                    (Some(k), true) => Some(mask_tensor(k, r)?),
                    (None, true) => Some(Tensor::zeros(&[1, r, r])),
                    _ => None,
                },
                known: match (&known_r, conditioning.inpaint_mask) {
                    (Some(k), true) => Some(k.values.clone()),
                    (None, true) => Some(Tensor::zeros(&[channels, r, r])),
                    _ => None,
                },
            };
            Some(input.to_channels(conditioning, channels, r)?)
        };
        let model_known = known_r.as_ref().map(|k| KnownPixels {
            mask: k.mask.clone(),
            values: k.values.map(|v| 2.0 * v - 1.0),
        });
        let x = sample_clipped(
            m.denoiser,
            m.schedule,
            &[channels, r, r],
            cond.as_ref(),
            model_known.as_ref(),
            Some(1.0),
            &mut rng,
        )?;
        let mut img = x.map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0));
        if let Some(k) = &known_r {
            k.impose_exact(&mut img);
        }
        prev = Some(img);
    }
    Ok(prev.expect("three models"))
}
