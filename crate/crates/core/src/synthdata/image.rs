use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::tiler::Rect;
use crate::{Result, Tensor};

/// Interleaved 8-bit image, row-major `H x W x C`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image8 {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

pub fn quantize(v: f64) -> u8 {
    math::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

impl Image8 {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 || data.len() != width * height * channels {
            bail!(
                InvalidShape,
                "{width}x{height}x{channels} image with {} bytes",
                data.len()
            );
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    /// Quantizes a `[C, H, W]` tensor with values in `[0, 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        let d = t.data();
        let mut data = vec![0u8; c * h * w];
        for ch in 0..c {
            for p in 0..h * w {
                data[p * c + ch] = quantize(d[ch * h * w + p]);
            }
        }
        Self::new(w, h, c, data)
    }

    pub fn to_tensor(&self) -> Tensor {
        self.crop_tensor(Rect {
            y: 0,
            x: 0,
            h: self.height,
            w: self.width,
        })
    }

    pub fn value(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c] as f64 / 255.0
    }

    /// `[C, h, w]` crop; pixels outside the image read as white.
    pub fn crop_tensor(&self, rect: Rect) -> Tensor {
        Tensor::from_fn(&[self.channels, rect.h, rect.w], |k| {
            let c = k / (rect.h * rect.w);
            let y = rect.y + (k / rect.w) % rect.h;
            let x = rect.x + k % rect.w;
            if y < self.height && x < self.width {
                self.value(c, y, x)
            } else {
                1.0
            }
        })
    }
}

/// Overlap weights of output cells with input cells when `n_in` samples are
/// integrated into `n_out` equal cells: `(first input index, weights)`.
fn area_weights(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = math::floor(lo) as usize;
            let mut weights = Vec::new();
            let mut i = first;
            while i < n_in && (i as f64) < hi {
                let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                weights.push(overlap / scale);
                i += 1;
            }
            (first, weights)
        })
        .collect()
}

/// Exact box-filter resampling of `[C, H, W]`: each output pixel is the
/// mean of the input over its footprint, fractional pixels weighted by
/// overlap.
pub fn area_resample(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = t.dims3()?;
    if out_h == 0 || out_w == 0 {
        bail!(InvalidShape, "empty resample target");
    }
    if (out_h, out_w) == (h, w) {
        return Ok(t.clone());
    }
    let wy = area_weights(h, out_h);
    let wx = area_weights(w, out_w);
    let d = t.data();
    let mut rows = vec![0.0; c * h * out_w];
    for ch in 0..c {
        for y in 0..h {
            let src = &d[(ch * h + y) * w..(ch * h + y + 1) * w];
            for (ox, (first, ws)) in wx.iter().enumerate() {
                rows[(ch * h + y) * out_w + ox] = ws.iter().enumerate().map(|(k, q)| q * src[first + k]).sum();
            }
        }
    }
    let mut out = vec![0.0; c * out_h * out_w];
    for ch in 0..c {
        for (oy, (first, ws)) in wy.iter().enumerate() {
            let dst = &mut out[(ch * out_h + oy) * out_w..(ch * out_h + oy + 1) * out_w];
            for (k, q) in ws.iter().enumerate() {
                let src = &rows[(ch * h + first + k) * out_w..(ch * h + first + k + 1) * out_w];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += q * s;
                }
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out)
}

/// Centre crop when larger, symmetric white padding when smaller (an odd
/// remainder goes to the bottom/right).
pub fn crop_or_pad(t: &Tensor, size: usize) -> Result<Tensor> {
    let (c, h, w) = t.dims3()?;
    if size == 0 {
        bail!(InvalidShape, "empty target size");
    }
    let offset = |n: usize| -> i64 {
        if n >= size {
            ((n - size) / 2) as i64
        } else {
            -(((size - n) / 2) as i64)
        }
    };
    let (oy, ox) = (offset(h), offset(w));
    let d = t.data();
    Ok(Tensor::from_fn(&[c, size, size], |k| {
        let ch = k / (size * size);
        let y = oy + ((k / size) % size) as i64;
        let x = ox + (k % size) as i64;
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            1.0
        } else {
            d[(ch * h + y as usize) * w + x as usize]
        }
    }))
}

/// One of the eight symmetries of the square applied to `[C, H, H]`:
/// bit 0 flips columns, bit 1 flips rows, bit 2 transposes (first).
pub fn dihedral(t: &Tensor, op: u8) -> Result<Tensor> {
    let (c, h, w) = t.dims3()?;
    if h != w {
        bail!(InvalidShape, "dihedral transform of non-square {h}x{w}");
    }
    let d = t.data();
    Ok(Tensor::from_fn(&[c, h, w], |k| {
        let ch = k / (h * w);
        let (mut y, mut x) = ((k / w) % h, k % w);
        if op & 1 != 0 {
            x = w - 1 - x;
        }
        if op & 2 != 0 {
            y = h - 1 - y;
        }
        if op & 4 != 0 {
            core::mem::swap(&mut y, &mut x);
        }
        d[(ch * h + y) * w + x]
    }))
}
