use alloc::vec;
use alloc::vec::Vec;

use crate::diffusion::KnownPixels;
use crate::error::bail;
use crate::{Result, Tensor};

use super::{Rect, TileGrid, TileId, WavefrontSchedule};

/// Output canvas `[C, W, W]` with a per-pixel writer count.
///
/// Every write over an already written pixel is compared bit for bit with
/// the existing value; differences are counted as seam violations.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    size: usize,
    channels: usize,
    data: Vec<f64>,
    writers: Vec<u16>,
    seam_violations: usize,
}

impl Canvas {
    pub fn new(size: usize, channels: usize) -> Self {
        Self {
            size,
            channels,
            data: vec![0.0; channels * size * size],
            writers: vec![0; size * size],
            seam_violations: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn writers(&self) -> &[u16] {
        &self.writers
    }

    pub fn writer_count(&self, y: usize, x: usize) -> u16 {
        self.writers[y * self.size + x]
    }

    pub fn seam_violations(&self) -> usize {
        self.seam_violations
    }

    pub fn is_fully_written(&self) -> bool {
        self.writers.iter().all(|&w| w > 0)
    }

    pub fn pixel(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.size + y) * self.size + x]
    }

    pub fn write(&mut self, rect: Rect, tile: &Tensor) -> Result<()> {
        if tile.shape() != [self.channels, rect.h, rect.w] {
            bail!(InvalidShape, "tile {:?} for rect {}x{}", tile.shape(), rect.h, rect.w);
        }
        if rect.y + rect.h > self.size || rect.x + rect.w > self.size {
            bail!(Geometry, "rect {rect:?} outside {0}x{0} canvas", self.size);
        }
        let n = self.size;
        let src = tile.data();
        for dy in 0..rect.h {
            for dx in 0..rect.w {
                let p = (rect.y + dy) * n + rect.x + dx;
                let mut differs = false;
                for c in 0..self.channels {
                    let v = src[(c * rect.h + dy) * rect.w + dx];
                    let slot = &mut self.data[c * n * n + p];
                    if self.writers[p] > 0 && slot.to_bits() != v.to_bits() {
                        differs = true;
                    }
                    *slot = v;
                }
                if differs {
                    self.seam_violations += 1;
                }
                self.writers[p] = self.writers[p].saturating_add(1);
            }
        }
        Ok(())
    }

    pub fn crop(&self, rect: Rect) -> Tensor {
        let n = self.size;
        Tensor::from_fn(&[self.channels, rect.h, rect.w], |k| {
            let c = k / (rect.h * rect.w);
            let r = k % (rect.h * rect.w);
            self.data[(c * n + rect.y + r / rect.w) * n + rect.x + r % rect.w]
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.channels, self.size, self.size], self.data.clone()).expect("canvas shape")
    }

    /// Pixels of `id` already produced by its top and left neighbours, with
    /// their canvas values.
    pub fn known_region(&self, schedule: &WavefrontSchedule, id: TileId) -> Result<KnownPixels> {
        let grid: &TileGrid = schedule.grid();
        if !schedule.dependencies_finished(id) {
            bail!(Scheduling, "tile ({}, {}) queried before its dependencies finished", id.i, id.j);
        }
        let rect = grid.rect(id);
        let deps: Vec<Rect> = grid.dependencies(id).into_iter().map(|d| grid.rect(d)).collect();
        let mut known = KnownPixels::empty(&[self.channels, rect.h, rect.w])?;
        let values = self.crop(rect);
        for dy in 0..rect.h {
            for dx in 0..rect.w {
                let (y, x) = (rect.y + dy, rect.x + dx);
                if deps.iter().any(|d| d.contains(y, x)) {
                    known.mask[dy * rect.w + dx] = true;
                }
            }
        }
        let hw = rect.h * rect.w;
        known.values = Tensor::from_fn(values.shape(), |k| if known.mask[k % hw] { values.data()[k] } else { 0.0 });
        Ok(known)
    }
}
