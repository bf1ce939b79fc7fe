use alloc::vec::Vec;

use crate::diffusion::Conditioning;
use crate::error::bail;
use crate::numerics::layers::{resize_image, ResizeMode};
use crate::{Result, Tensor};

/// Conditioning for one sample, in image space (`[0, 1]` per channel).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionInput {
    /// `[C, h, w]` images; resized bilinearly to the model resolution.
    pub images: Vec<Tensor>,
    /// Binary `[1, H, W]` known-pixel mask (1 = constrained).
    pub mask: Option<Tensor>,
    /// `[C, H, W]` known values; only read where the mask is 1.
    pub known: Option<Tensor>,
}

impl ConditionInput {
    pub fn images(images: Vec<Tensor>) -> Self {
        Self {
            images,
            mask: None,
            known: None,
        }
    }

    /// Builds the `[Cc, r, r]` channel block a model with `conditioning`
    /// expects. Image values are mapped from `[0, 1]` to `[-1, 1]`.
    pub fn to_channels(&self, conditioning: Conditioning, channels: usize, resolution: usize) -> Result<Tensor> {
        if self.images.len() != conditioning.images {
            bail!(
                Config,
                "model expects {} conditioning images, got {}",
                conditioning.images,
                self.images.len()
            );
        }
        let has_mask = self.mask.is_some() || self.known.is_some();
        if has_mask != conditioning.inpaint_mask {
            bail!(Config, "inpainting mask supplied = {has_mask}, model expects {}", conditioning.inpaint_mask);
        }
        let hw = resolution * resolution;
        let mut data = Vec::with_capacity(conditioning.channels(channels) * hw);
        for img in &self.images {
            let (c, h, w) = img.dims3()?;
            if c != channels {
                bail!(InvalidShape, "conditioning image has {c} channels, expected {channels}");
            }
            let img = if (h, w) == (resolution, resolution) {
                img.clone()
            } else {
                resize_image(img, resolution, resolution, ResizeMode::Bilinear)?
            };
            data.extend(img.data().iter().map(|v| 2.0 * v - 1.0));
        }
        if conditioning.inpaint_mask {
            let (Some(mask), Some(known)) = (&self.mask, &self.known) else {
                bail!(Config, "mask and known values must be supplied together");
            };
            if mask.shape() != [1, resolution, resolution] || known.shape() != [channels, resolution, resolution] {
                bail!(InvalidShape, "mask {:?} / known {:?} at resolution {resolution}", mask.shape(), known.shape());
            }
            if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
                bail!(Config, "mask is not binary");
            }
            data.extend_from_slice(mask.data());
            for (i, v) in known.data().iter().enumerate() {
                data.push(mask.data()[i % hw] * (2.0 * v - 1.0));
            }
        }
        Tensor::new(&[conditioning.channels(channels), resolution, resolution], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn count_mismatch_is_config_error() {
        let ci = ConditionInput::default();
        let cond = Conditioning {
            images: 1,
            inpaint_mask: false,
        };
        assert!(matches!(ci.to_channels(cond, 3, 8), Err(crate::Error::Config(_))));
    }

    #[test]
    fn non_binary_mask_rejected() {
        let ci = ConditionInput {
            images: vec![],
            mask: Some(Tensor::full(&[1, 8, 8], 0.5)),
            known: Some(Tensor::zeros(&[3, 8, 8])),
        };
        let cond = Conditioning {
            images: 0,
            inpaint_mask: true,
        };
        assert!(ci.to_channels(cond, 3, 8).is_err());
    }

    #[test]
    fn image_resized_and_rescaled() {
        let ci = ConditionInput::images(vec![Tensor::full(&[3, 4, 4], 1.0)]);
        let cond = Conditioning {
            images: 1,
            inpaint_mask: false,
        };
        let t = ci.to_channels(cond, 3, 8).unwrap();
        assert_eq!(t.shape(), &[3, 8, 8]);
        assert!(t.data().iter().all(|&v| v == 1.0));
    }
}
