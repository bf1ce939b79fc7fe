//! Cascades of denoisers and their composition into magnification stages.

mod cdm;
mod context;

pub use cdm::{downsample_known, expected_conditioning, run_cdm, Cdm, CdmModel};
pub use context::{center_context_crop, map_center, ContextAlignment};

use alloc::vec::Vec;

use crate::diffusion::KnownPixels;
use crate::error::bail;
use crate::rng::stable_hash;
use crate::synthdata::crop_or_pad;
use crate::tiler::{
    bilinear_footprint, plan_grid, run_stage, Canvas, Rect, StageEvent, StageFailure, StageOutput, TileGenerator,
    TileGrid, TileId, TileOutcome, WhiteRule,
};
use crate::{Error, Result, Tensor};

/// Canvas sizes and tiling parameters of the three magnification stages.
#[derive(Debug, Clone, PartialEq)]
pub struct UrcdmGeometry {
    /// Output side lengths `W1 < W2 < W3`.
    pub sizes: [usize; 3],
    /// Tile side `P`, equal to the final resolution of each cascade.
    pub patch: usize,
    /// Overlap fraction `ω` between neighbouring tiles.
    pub overlap: f64,
    pub alignment: ContextAlignment,
    pub white_rule: WhiteRule,
    /// Stages (1-based index into this array) where white tiles are replaced
    /// by the upscaled previous stage.
    pub white_stages: [bool; 3],
    /// Optional final crop/pad of the last stage.
    pub final_size: Option<usize>,
}

impl UrcdmGeometry {
    pub fn desk() -> Self {
        Self {
            sizes: [32, 200, 1376],
            patch: 32,
            overlap: 0.125,
            alignment: ContextAlignment::Snap,
            white_rule: WhiteRule::default(),
            white_stages: [false, false, true],
            final_size: None,
        }
    }

    /// Grid of tiled stage `stage` (2 or 3).
    pub fn grid(&self, stage: usize) -> Result<TileGrid> {
        if !(2..=3).contains(&stage) {
            bail!(Geometry, "stage {stage} is not tiled");
        }
        plan_grid(self.sizes[stage - 1], self.patch, self.overlap)
    }

    /// Context window side expressed in the previous stage's pixels when
    /// mapped back to this stage, `P·W(s−1)/W(s)`.
    pub fn footprint(&self, stage: usize) -> f64 {
        self.patch as f64 * self.sizes[stage - 2] as f64 / self.sizes[stage - 1] as f64
    }

    pub fn validate(&self) -> Result<()> {
        let [w1, w2, w3] = self.sizes;
        if !(w1 > 0 && w1 < w2 && w2 < w3) {
            bail!(Geometry, "stage sizes {w1}, {w2}, {w3} must increase");
        }
        if w1 != self.patch {
            bail!(Geometry, "stage 1 size {w1} must equal the patch size {}", self.patch);
        }
        self.grid(2)?;
        self.grid(3)?;
        if self.alignment == ContextAlignment::Strict {
            for stage in 2..=3 {
                let num = self.patch * self.sizes[stage - 2];
                if num % self.sizes[stage - 1] != 0 {
                    bail!(
                        Geometry,
                        "stage {stage} tile footprint {} is not a whole number of pixels",
                        self.footprint(stage)
                    );
                }
            }
        }
        if let Some(f) = self.final_size {
            if f == 0 {
                bail!(Geometry, "final size must be positive");
            }
        }
        Ok(())
    }
}

/// Dry-run description of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub stage: usize,
    pub canvas: usize,
    /// `None` for the untiled first stage.
    pub grid: Option<TileGrid>,
    pub wavefronts: usize,
    pub max_parallel: usize,
    /// Tile footprint in previous-stage pixels (tiled stages).
    pub footprint: Option<f64>,
}

impl StagePlan {
    pub fn tiles(&self) -> usize {
        self.grid.map_or(1, |g| g.len())
    }

    pub fn integer_footprint(&self) -> bool {
        self.footprint.is_none_or(|f| (f - crate::numerics::math::round(f)).abs() < 1e-9)
    }
}

pub fn plan(geometry: &UrcdmGeometry) -> Result<Vec<StagePlan>> {
    geometry.validate()?;
    let mut out = Vec::with_capacity(3);
    out.push(StagePlan {
        stage: 1,
        canvas: geometry.sizes[0],
        grid: None,
        wavefronts: 1,
        max_parallel: 1,
        footprint: None,
    });
    for stage in 2..=3 {
        let g = geometry.grid(stage)?;
        out.push(StagePlan {
            stage,
            canvas: g.canvas,
            grid: Some(g),
            wavefronts: g.wavefront_count(),
            max_parallel: g.max_wavefront_width(),
            footprint: Some(geometry.footprint(stage)),
        });
    }
    Ok(out)
}

/// Three cascades (low, mid, high magnification) plus geometry.
#[derive(Clone)]
pub struct Urcdm<'a> {
    pub cdms: [Cdm<'a>; 3],
    pub geometry: UrcdmGeometry,
    pub channels: usize,
}

impl<'a> Urcdm<'a> {
    pub fn new(cdms: [Cdm<'a>; 3], geometry: UrcdmGeometry, channels: usize) -> Result<Self> {
        geometry.validate()?;
        for (k, cdm) in cdms.iter().enumerate() {
            cdm.validate(k > 0)?;
            if cdm.output_resolution() != geometry.patch {
                bail!(
                    Config,
                    "cascade {} outputs {}px, patch size is {}",
                    k + 1,
                    cdm.output_resolution(),
                    geometry.patch
                );
            }
        }
        Ok(Self {
            cdms,
            geometry,
            channels,
        })
    }
}

/// Tile generator of a tiled stage: white substitution or a constrained
/// cascade sample conditioned on the centred context window.
pub struct StageTiles<'a, 'm> {
    pub cdm: &'a Cdm<'m>,
    pub prev: &'a Tensor,
    pub canvas: usize,
    pub patch: usize,
    pub channels: usize,
    pub alignment: ContextAlignment,
    pub white_rule: Option<WhiteRule>,
}

impl StageTiles<'_, '_> {
    pub fn context(&self, rect: Rect) -> Result<Tensor> {
        let (_, hp, _) = self.prev.dims3()?;
        center_context_crop(self.prev, map_center(rect, self.canvas, hp), self.patch, self.alignment)
    }
}

impl TileGenerator for StageTiles<'_, '_> {
    fn generate(&self, _id: TileId, rect: Rect, seed: u64, known: &KnownPixels) -> Result<TileOutcome> {
        if let Some(rule) = self.white_rule {
            let mut footprint = bilinear_footprint(self.prev, self.canvas, rect)?;
            if rule.is_white(&footprint) {
                known.impose_exact(&mut footprint);
                return Ok(TileOutcome {
                    image: footprint,
                    white: true,
                });
            }
        }
        let context = self.context(rect)?;
        let image = run_cdm(self.cdm, self.channels, Some(&context), Some(known), seed)?;
        Ok(TileOutcome { image, white: false })
    }
}

/// Executes one tiled stage; the sequential runner is [`SequentialRunner`].
pub trait StageRunner {
    fn run(
        &self,
        grid: TileGrid,
        channels: usize,
        stage: usize,
        seed: u64,
        generator: &dyn TileGenerator,
    ) -> Result<StageOutput, StageFailure>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialRunner;

impl StageRunner for SequentialRunner {
    fn run(
        &self,
        grid: TileGrid,
        channels: usize,
        stage: usize,
        seed: u64,
        generator: &dyn TileGenerator,
    ) -> Result<StageOutput, StageFailure> {
        run_stage(grid, channels, stage, seed, generator)
    }
}

#[derive(Debug, Clone)]
pub struct WsiOutput {
    /// Stage images `[C, Ws, Ws]` in `[0, 1]`, low magnification first.
    pub levels: [Tensor; 3],
    /// Assembly records of stages 2 and 3.
    pub stages: [StageOutput; 2],
}

#[derive(Debug, Clone)]
pub struct WsiFailure {
    /// 1-based stage that failed.
    pub stage: usize,
    pub error: Error,
    pub partial: Option<Canvas>,
    pub events: Vec<StageEvent>,
}

/// Seed of the untiled first stage.
pub fn stage_one_seed(seed: u64) -> u64 {
    stable_hash(&[seed, 1])
}

/// Full three-stage synthesis; a pure function of models, geometry and seed.
pub fn generate_wsi(urcdm: &Urcdm<'_>, seed: u64, runner: &dyn StageRunner) -> Result<WsiOutput, WsiFailure> {
    let geo = &urcdm.geometry;
    let fail = |stage: usize, error: Error| WsiFailure {
        stage,
        error,
        partial: None,
        events: Vec::new(),
    };
    let level1 = run_cdm(&urcdm.cdms[0], urcdm.channels, None, None, stage_one_seed(seed)).map_err(|e| fail(1, e))?;
    let mut levels: Vec<Tensor> = alloc::vec![level1];
    let mut stages: Vec<StageOutput> = Vec::with_capacity(2);
    for stage in 2..=3 {
        let grid = geo.grid(stage).map_err(|e| fail(stage, e))?;
        let prev = levels.last().expect("previous stage");
        let tiles = StageTiles {
            cdm: &urcdm.cdms[stage - 1],
            prev,
            canvas: grid.canvas,
            patch: geo.patch,
            channels: urcdm.channels,
            alignment: geo.alignment,
            white_rule: geo.white_stages[stage - 1].then_some(geo.white_rule),
        };
        let out = runner
            .run(grid, urcdm.channels, stage, seed, &tiles)
            .map_err(|f| WsiFailure {
                stage,
                error: f.error,
                partial: Some(f.partial),
                events: f.events,
            })?;
        levels.push(out.canvas.to_tensor());
        stages.push(out);
    }
    if let Some(size) = geo.final_size {
        let last = levels.pop().expect("three levels");
        levels.push(crop_or_pad(&last, size).map_err(|e| fail(3, e))?);
    }
    let [l1, l2, l3]: [Tensor; 3] = levels.try_into().map_err(|_| fail(3, Error::State("level count".into())))?;
    let [s2, s3]: [StageOutput; 2] = stages
        .try_into()
        .map_err(|_| fail(3, Error::State("stage count".into())))?;
    Ok(WsiOutput {
        levels: [l1, l2, l3],
        stages: [s2, s3],
    })
}
