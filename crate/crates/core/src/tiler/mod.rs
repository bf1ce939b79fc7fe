//! Overlapping tile grids, wavefront scheduling and seam-exact assembly.

mod canvas;
mod schedule;
mod stage;
mod white;

pub use canvas::Canvas;
pub use schedule::{TileStatus, WavefrontSchedule};
pub use stage::{
    check_event_order, run_stage, StageEvent, StageFailure, StageOutput, StageState, TileGenerator, TileOutcome, TileTask,
    Transition,
};
pub use white::{bilinear_footprint, is_white_patch, WhiteRule};

use alloc::vec::Vec;

use crate::error::bail;
use crate::rng::stable_hash;
use crate::Result;

/// Grid coordinates: `i` is the row, `j` the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TileId {
    pub i: usize,
    pub j: usize,
}

/// Axis-aligned square-or-rectangular pixel region `[y, y+h) x [x, x+w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub y: usize,
    pub x: usize,
    pub h: usize,
    pub w: usize,
}

impl Rect {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.y && y < self.y + self.h && x >= self.x && x < self.x + self.w
    }

    pub fn area(&self) -> usize {
        self.h * self.w
    }
}

/// A square canvas covered by `per_side x per_side` overlapping patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub canvas: usize,
    pub patch: usize,
    pub stride: usize,
    pub per_side: usize,
}

/// Patch stride `P·(1−ω)`, which must be a positive integer.
pub fn stride_for(patch: usize, overlap: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap) {
        bail!(Geometry, "overlap fraction {overlap} outside [0, 1)");
    }
    let s = patch as f64 * (1.0 - overlap);
    let rounded = crate::numerics::math::round(s);
    if (s - rounded).abs() > 1e-9 || rounded < 1.0 {
        bail!(Geometry, "stride {patch}·(1−{overlap}) = {s} is not a positive integer");
    }
    Ok(rounded as usize)
}

pub fn plan_grid(canvas: usize, patch: usize, overlap: f64) -> Result<TileGrid> {
    let stride = stride_for(patch, overlap)?;
    if patch == 0 || canvas < patch {
        bail!(Geometry, "canvas {canvas} smaller than patch {patch}");
    }
    let rem = (canvas - patch) % stride;
    if rem != 0 {
        bail!(Geometry, "canvas {canvas} minus patch {patch} leaves remainder {rem} modulo stride {stride}");
    }
    Ok(TileGrid {
        canvas,
        patch,
        stride,
        per_side: (canvas - patch) / stride + 1,
    })
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.per_side * self.per_side
    }

    pub fn is_empty(&self) -> bool {
        self.per_side == 0
    }

    pub fn overlap_pixels(&self) -> usize {
        self.patch - self.stride
    }

    /// Tiles in row-major order.
    pub fn tiles(&self) -> impl Iterator<Item = TileId> + '_ {
        let n = self.per_side;
        (0..n * n).map(move |k| TileId { i: k / n, j: k % n })
    }

    pub fn index(&self, id: TileId) -> usize {
        id.i * self.per_side + id.j
    }

    pub fn rect(&self, id: TileId) -> Rect {
        Rect {
            y: id.i * self.stride,
            x: id.j * self.stride,
            h: self.patch,
            w: self.patch,
        }
    }

    /// The top then left neighbour, where they exist.
    pub fn dependencies(&self, id: TileId) -> Vec<TileId> {
        let mut deps = Vec::with_capacity(2);
        if id.i > 0 {
            deps.push(TileId { i: id.i - 1, j: id.j });
        }
        if id.j > 0 {
            deps.push(TileId { i: id.i, j: id.j - 1 });
        }
        deps
    }

    /// Number of anti-diagonals `i + j = L`.
    pub fn wavefront_count(&self) -> usize {
        2 * self.per_side - 1
    }

    pub fn wavefront_width(&self, level: usize) -> usize {
        let n = self.per_side;
        if level >= 2 * n - 1 {
            return 0;
        }
        (level + 1).min(n).min(2 * n - 1 - level)
    }

    pub fn max_wavefront_width(&self) -> usize {
        self.per_side
    }
}

pub fn tile_seed(global_seed: u64, stage: usize, id: TileId) -> u64 {
    stable_hash(&[global_seed, stage as u64, id.i as u64, id.j as u64])
}
