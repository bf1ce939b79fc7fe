use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::rng::NoiseStream;
use crate::synthdata::Image8;
use crate::tiler::Rect;
use crate::{Result, Tensor};

use super::{frechet_distance, FeatureExtractor, FeatureMoments};

/// Scales a crop may be drawn at.
pub const ALLOWED_SCALES: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

/// A square crop of side `window` at `(y, x)`; `pick` selects the image
/// (modulo the set size), so identical sets yield identical crops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropSpec {
    pub scale: f64,
    pub window: usize,
    pub y: usize,
    pub x: usize,
    pub pick: u64,
}

impl CropSpec {
    pub fn rect(&self) -> Rect {
        Rect {
            y: self.y,
            x: self.x,
            h: self.window,
            w: self.window,
        }
    }
}

/// Something crops can be read from: a square `[C, W, W]` image.
pub trait PatchSource: Sync {
    fn size(&self) -> usize;

    fn patch(&self, rect: Rect) -> Tensor;
}

impl PatchSource for Image8 {
    fn size(&self) -> usize {
        self.width().min(self.height())
    }

    fn patch(&self, rect: Rect) -> Tensor {
        self.crop_tensor(rect)
    }
}

impl PatchSource for Tensor {
    fn size(&self) -> usize {
        self.shape().get(1).copied().unwrap_or(0)
    }

    fn patch(&self, rect: Rect) -> Tensor {
        let (c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let d = self.data();
        Tensor::from_fn(&[c, rect.h, rect.w], |k| {
            let ch = k / (rect.h * rect.w);
            let y = rect.y + (k / rect.w) % rect.h;
            let x = rect.x + k % rect.w;
            if y < h && x < w {
                d[(ch * h + y) * w + x]
            } else {
                1.0
            }
        })
    }
}

/// Seeded crop list: scale uniform over `scales`, window `base/scale`,
/// position uniform over the canvas.
pub fn draw_crop_specs(count: usize, scales: &[f64], canvas: usize, base: usize, seed: u64) -> Result<Vec<CropSpec>> {
    if scales.is_empty() {
        bail!(Config, "no crop scales");
    }
    for &s in scales {
        if !ALLOWED_SCALES.contains(&s) {
            bail!(Config, "crop scale {s} not in {{1, 1/2, 1/4, 1/8}}");
        }
        let window = math::round(base as f64 / s) as usize;
        if window > canvas {
            bail!(Geometry, "crop window {window} exceeds canvas {canvas}");
        }
    }
    let mut rng = NoiseStream::new(seed);
    Ok((0..count)
        .map(|_| {
            let scale = scales[rng.below(scales.len())];
            let window = math::round(base as f64 / scale) as usize;
            let y = rng.below(canvas - window + 1);
            let x = rng.below(canvas - window + 1);
            CropSpec {
                scale,
                window,
                y,
                x,
                pick: rng.next_u64(),
            }
        })
        .collect())
}

pub fn crop_features(
    images: &[&dyn PatchSource],
    specs: &[CropSpec],
    extractor: &dyn FeatureExtractor,
) -> Result<Vec<Vec<f64>>> {
    if images.is_empty() {
        bail!(Dataset, "no images to crop from");
    }
    specs
        .iter()
        .map(|s| {
            let img = images[(s.pick % images.len() as u64) as usize];
            if s.y + s.window > img.size() || s.x + s.window > img.size() {
                bail!(Geometry, "crop {s:?} outside {}px image", img.size());
            }
            extractor.extract(&img.patch(s.rect()))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PfidResult {
    pub value: f64,
    pub real: FeatureMoments,
    pub generated: FeatureMoments,
    pub real_features: Vec<Vec<f64>>,
    pub generated_features: Vec<Vec<f64>>,
}

/// Fréchet distance between features of the same crop list applied to the
/// real and the generated set.
pub fn pfid(
    real: &[&dyn PatchSource],
    generated: &[&dyn PatchSource],
    specs: &[CropSpec],
    extractor: &dyn FeatureExtractor,
) -> Result<PfidResult> {
    let size = |set: &[&dyn PatchSource]| set.iter().map(|s| s.size()).min().unwrap_or(0);
    if size(real) != size(generated) {
        bail!(Geometry, "real canvases {}px, generated {}px", size(real), size(generated));
    }
    let real_features = crop_features(real, specs, extractor)?;
    let generated_features = crop_features(generated, specs, extractor)?;
    let r = FeatureMoments::from_features(&real_features)?;
    let g = FeatureMoments::from_features(&generated_features)?;
    Ok(PfidResult {
        value: frechet_distance(&r, &g)?,
        real: r,
        generated: g,
        real_features,
        generated_features,
    })
}
