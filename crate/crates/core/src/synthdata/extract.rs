use alloc::vec::Vec;

use crate::cascade::{center_context_crop, expected_conditioning, map_center, ContextAlignment};
use crate::diffusion::TrainBatch;
use crate::error::bail;
use crate::numerics::math;
use crate::rng::NoiseStream;
use crate::scorenet::ConditionInput;
use crate::tiler::{Rect, WhiteRule};
use crate::{Result, Tensor};

use super::image::{area_resample, dihedral};
use super::Pyramid;

/// Magnification stage a model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Magnification {
    Low,
    Mid,
    High,
}

impl Magnification {
    pub const ALL: [Magnification; 3] = [Magnification::Low, Magnification::Mid, Magnification::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Magnification::Low => "low",
            Magnification::Mid => "mid",
            Magnification::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Position of a model inside its cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelSlot {
    Base,
    Sr1,
    Sr2,
}

impl ModelSlot {
    pub const ALL: [ModelSlot; 3] = [ModelSlot::Base, ModelSlot::Sr1, ModelSlot::Sr2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelSlot::Base => "base",
            ModelSlot::Sr1 => "sr1",
            ModelSlot::Sr2 => "sr2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Crop location: pyramid index and top-left corner at the stage's level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropRef {
    pub pyramid: usize,
    pub y: usize,
    pub x: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractParams {
    /// Patch side `P` at the stage's level.
    pub patch: usize,
    /// Spacing of candidate crop corners.
    pub step: usize,
    /// Cascade resolutions `r0 < r1 < r2`, with `r2 = P`.
    pub resolutions: [usize; 3],
    pub overlap: f64,
    pub alignment: ContextAlignment,
    pub white_rule: WhiteRule,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            patch: 32,
            step: 16,
            resolutions: [8, 16, 32],
            overlap: 0.125,
            alignment: ContextAlignment::Snap,
            white_rule: WhiteRule::default(),
        }
    }
}

/// One target image with its conditioning, both in image space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub target: Tensor,
    pub cond: ConditionInput,
    pub magnification: Magnification,
}

/// Non-white crop locations of one stage, materialized lazily.
#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    pyramids: &'a [Pyramid],
    stage: Magnification,
    params: ExtractParams,
    crops: Vec<CropRef>,
    /// Coarser level of every pyramid as a tensor (context source).
    context_levels: Vec<Tensor>,
}

/// Known-pixel layouts drawn during training, matching what tiles see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MaskKind {
    None,
    Left,
    Top,
    Corner,
}

pub fn extract_training_set<'a>(
    pyramids: &'a [Pyramid],
    stage: Magnification,
    params: &ExtractParams,
) -> Result<TrainingSet<'a>> {
    let p = params.patch;
    if params.resolutions[2] != p || params.step == 0 {
        bail!(Config, "patch {p} must equal the final resolution; step must be positive");
    }
    let level = stage.index();
    let mut crops = Vec::new();
    let mut context_levels = Vec::new();
    for (k, pyr) in pyramids.iter().enumerate() {
        let img = pyr.levels.get(level).ok_or_else(|| crate::Error::Dataset("missing level".into()))?;
        if img.width() < p || img.height() < p {
            bail!(Dataset, "level {level} of {} smaller than patch {p}", pyr.id);
        }
        if stage == Magnification::Low {
            if img.width() != p || img.height() != p {
                bail!(Dataset, "low magnification level of {} is not {p}x{p}", pyr.id);
            }
            crops.push(CropRef { pyramid: k, y: 0, x: 0 });
        } else {
            context_levels.push(pyr.levels[level - 1].to_tensor());
            let mut y = 0;
            while y + p <= img.height() {
                let mut x = 0;
                while x + p <= img.width() {
                    crops.push(CropRef { pyramid: k, y, x });
                    x += params.step;
                }
                y += params.step;
            }
        }
    }
    crops.retain(|c| {
        let t = pyramids[c.pyramid].levels[level].crop_tensor(Rect {
            y: c.y,
            x: c.x,
            h: p,
            w: p,
        });
        !params.white_rule.is_white(&t)
    });
    if crops.is_empty() {
        bail!(Dataset, "no non-white {} crops", stage.name());
    }
    Ok(TrainingSet {
        pyramids,
        stage,
        params: params.clone(),
        crops,
        context_levels,
    })
}

impl<'a> TrainingSet<'a> {
    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    pub fn crops(&self) -> &[CropRef] {
        &self.crops
    }

    pub fn stage(&self) -> Magnification {
        self.stage
    }

    fn crop_rect(&self, c: CropRef) -> Rect {
        Rect {
            y: c.y,
            x: c.x,
            h: self.params.patch,
            w: self.params.patch,
        }
    }

    /// Full-resolution crop `[C, P, P]`.
    pub fn crop(&self, c: CropRef) -> Tensor {
        self.pyramids[c.pyramid].levels[self.stage.index()].crop_tensor(self.crop_rect(c))
    }

    /// Centred context window from the coarser level.
    pub fn context(&self, c: CropRef) -> Result<Tensor> {
        if self.stage == Magnification::Low {
            bail!(Dataset, "low magnification crops have no context");
        }
        let level = self.stage.index();
        let canvas = self.pyramids[c.pyramid].levels[level].width();
        let prev = &self.context_levels[c.pyramid];
        let (_, hp, _) = prev.dims3()?;
        center_context_crop(prev, map_center(self.crop_rect(c), canvas, hp), self.params.patch, self.params.alignment)
    }

    fn known_mask(&self, kind: MaskKind, r: usize) -> Tensor {
        let width = math::round((self.params.patch as f64 * self.params.overlap) * r as f64 / self.params.patch as f64)
            as usize;
        Tensor::from_fn(&[1, r, r], |k| {
            let (y, x) = (k / r, k % r);
            let left = x < width && matches!(kind, MaskKind::Left | MaskKind::Corner);
            let top = y < width && matches!(kind, MaskKind::Top | MaskKind::Corner);
            if left || top {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Training example for `slot` at crop `index`, with a random symmetry
    /// and (for tiled stages) a random known-pixel layout.
    pub fn example(&self, index: usize, slot: ModelSlot, rng: &mut NoiseStream) -> Result<TrainingExample> {
        let c = self.crops[index % self.crops.len()];
        let op = rng.below(8) as u8;
        let kind = [MaskKind::None, MaskKind::Left, MaskKind::Top, MaskKind::Corner][rng.below(4)];
        let full = dihedral(&self.crop(c), op)?;
        let r = self.params.resolutions[slot.index()];
        let target = area_resample(&full, r, r)?;
        let mut images = Vec::new();
        if slot != ModelSlot::Base {
            let rl = self.params.resolutions[slot.index() - 1];
            images.push(area_resample(&full, rl, rl)?);
        }
        let tiled = self.stage != Magnification::Low;
        let (mask, known) = if tiled {
            images.push(dihedral(&self.context(c)?, op)?);
            let mask = self.known_mask(kind, r);
            let hw = r * r;
            let known = Tensor::from_fn(target.shape(), |k| mask.data()[k % hw] * target.data()[k]);
            (Some(mask), Some(known))
        } else {
            (None, None)
        };
        Ok(TrainingExample {
            target,
            cond: ConditionInput { images, mask, known },
            magnification: self.stage,
        })
    }

    /// A batch of `size` random examples, conditioning packed for `slot`.
    pub fn batch(&self, slot: ModelSlot, size: usize, rng: &mut NoiseStream) -> Result<TrainBatch> {
        let r = self.params.resolutions[slot.index()];
        let conditioning = expected_conditioning(slot.index(), self.stage != Magnification::Low);
        let mut x0 = Vec::with_capacity(size);
        let mut cond = Vec::with_capacity(size);
        for _ in 0..size {
            let ex = self.example(rng.below(self.crops.len()), slot, rng)?;
            let (c, _, _) = ex.target.dims3()?;
            x0.push(ex.target.map(|v| 2.0 * v - 1.0));
            if !conditioning.is_none() {
                cond.push(ex.cond.to_channels(conditioning, c, r)?);
            }
        }
        Ok(TrainBatch {
            x0: Tensor::stack(&x0)?,
            cond: if cond.is_empty() { None } else { Some(Tensor::stack(&cond)?) },
        })
    }
}

