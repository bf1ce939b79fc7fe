use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::rng::{mix64, stable_hash, NoiseStream};
use crate::{Result, Tensor};

use super::image::{area_resample, Image8};

/// A synthetic slide at three magnifications, coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub id: String,
    pub seed: u64,
    pub levels: Vec<Image8>,
}

impl Pyramid {
    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Image8::width).collect()
    }

    pub fn level(&self, k: usize) -> &Image8 {
        &self.levels[k]
    }
}

/// Parameters of the procedural generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// Level sizes, coarsest first; the finest is rendered, the rest are
    /// area-downsampled from it.
    pub sizes: [usize; 3],
    /// Range the background fraction of each slide is drawn from.
    pub background: (f64, f64),
    /// Nucleus lattice cell size in finest-level pixels.
    pub nucleus_cell: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            sizes: [32, 200, 1376],
            background: (0.3, 0.5),
            nucleus_cell: 8.0,
        }
    }
}

const BACKGROUND: [f64; 3] = [0.97, 0.96, 0.98];
const STROMA_LIGHT: [f64; 3] = [0.93, 0.68, 0.80];
const STROMA_DARK: [f64; 3] = [0.78, 0.42, 0.62];
const NUCLEUS: [f64; 3] = [0.38, 0.20, 0.52];

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Lattice value noise in `[0, 1)`.
fn value_noise(seed: u64, u: f64, v: f64) -> f64 {
    let (fu, fv) = (math::floor(u), math::floor(v));
    let (iu, iv) = (fu as i64, fv as i64);
    let (tu, tv) = (smooth(u - fu), smooth(v - fv));
    let at = |a: i64, b: i64| unit(stable_hash(&[seed, a as u64, b as u64]));
    let top = at(iu, iv) * (1.0 - tu) + at(iu + 1, iv) * tu;
    let bottom = at(iu, iv + 1) * (1.0 - tu) + at(iu + 1, iv + 1) * tu;
    top * (1.0 - tv) + bottom * tv
}

fn fbm(seed: u64, u: f64, v: f64, base: f64, octaves: u32) -> f64 {
    let (mut sum, mut amp, mut norm, mut freq) = (0.0, 1.0, 0.0, base);
    for o in 0..octaves {
        sum += amp * value_noise(mix64(seed ^ o as u64), u * freq, v * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

/// Nucleus coverage at pixel `(x, y)`: each lattice cell holds at most one
/// disc, present with a probability that grows with tissue density.
fn nucleus(seed: u64, x: f64, y: f64, cell: f64, density: impl Fn(f64, f64) -> f64) -> f64 {
    let (cx, cy) = (math::floor(x / cell) as i64, math::floor(y / cell) as i64);
    let mut cover: f64 = 0.0;
    for dy in -1..=1 {
        for dx in -1..=1 {
            let (gx, gy) = (cx + dx, cy + dy);
            let h = stable_hash(&[seed, gx as u64, gy as u64]);
            let px = (gx as f64 + 0.2 + 0.6 * unit(mix64(h))) * cell;
            let py = (gy as f64 + 0.2 + 0.6 * unit(mix64(h ^ 1))) * cell;
            if unit(mix64(h ^ 2)) > density(px, py) {
                continue;
            }
            let r = cell * (0.22 + 0.2 * unit(mix64(h ^ 3)));
            let d = math::sqrt((x - px) * (x - px) + (y - py) * (y - py));
            cover = cover.max((1.0 - (d - r + 0.75).max(0.0) / 1.5).clamp(0.0, 1.0));
        }
    }
    cover
}

/// Renders the finest level as `[3, W, W]`.
fn render(seed: u64, params: &GeneratorParams) -> Result<Tensor> {
    let w = params.sizes[2];
    let inv = 1.0 / w as f64;
    let s_blob = stable_hash(&[seed, 1]);
    let s_tex = stable_hash(&[seed, 2]);
    let s_nuc = stable_hash(&[seed, 3]);
    let s_bg = stable_hash(&[seed, 4]);
    let mut rng = NoiseStream::new(stable_hash(&[seed, 5]));
    let (lo, hi) = params.background;
    if !(0.0..1.0).contains(&lo) || hi < lo || hi >= 1.0 {
        bail!(Config, "background range ({lo}, {hi})");
    }
    let target = lo + (hi - lo) * rng.uniform();

    let field: Vec<f64> = (0..w * w)
        .map(|p| fbm(s_blob, (p % w) as f64 * inv, (p / w) as f64 * inv, 3.0, 4))
        .collect();
    let mut sorted = field.clone();
    let k = ((target * (w * w) as f64) as usize).min(w * w - 1);
    let (_, threshold, _) = sorted.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    let threshold = *threshold;
    let edge = 0.01;

    let mut out = vec![0.0; 3 * w * w];
    for p in 0..w * w {
        let (x, y) = ((p % w) as f64, (p / w) as f64);
        let f = field[p];
        let tissue = smooth(((f - threshold + edge) / (2.0 * edge)).clamp(0.0, 1.0));
        let grain = 0.01 * (unit(stable_hash(&[s_bg, p as u64])) - 0.5);
        let mut color = BACKGROUND.map(|c| c + grain);
        if tissue > 0.0 {
            let tex = fbm(s_tex, x * inv, y * inv, 24.0, 2);
            let stroma = mix(STROMA_LIGHT, STROMA_DARK, tex);
            let cell = params.nucleus_cell;
            let density = |px: f64, py: f64| {
                let fx = (px.clamp(0.0, (w - 1) as f64)) as usize;
                let fy = (py.clamp(0.0, (w - 1) as f64)) as usize;
                (0.25 + 4.0 * (field[fy * w + fx] - threshold)).clamp(0.0, 0.85)
            };
            let n = nucleus(s_nuc, x, y, cell, density);
            let tinted = mix(stroma, NUCLEUS, n);
            color = mix(color, tinted, tissue);
        }
        for c in 0..3 {
            out[c * w * w + p] = color[c].clamp(0.0, 1.0);
        }
    }
    Tensor::new(&[3, w, w], out)
}

/// Deterministic slide for `seed`; coarser levels are exact area averages of
/// the rendered finest level, each quantized to 8 bits.
pub fn gen_pyramid(seed: u64, params: &GeneratorParams) -> Result<Pyramid> {
    let [w0, w1, w2] = params.sizes;
    if !(w0 > 0 && w0 <= w1 && w1 <= w2) {
        bail!(Config, "pyramid sizes {w0}, {w1}, {w2} must not decrease");
    }
    let fine = render(seed, params)?;
    let mid = area_resample(&fine, w1, w1)?;
    let low = area_resample(&fine, w0, w0)?;
    Ok(Pyramid {
        id: format!("slide-{seed:016x}"),
        seed,
        levels: vec![
            Image8::from_tensor(&low)?,
            Image8::from_tensor(&mid)?,
            Image8::from_tensor(&fine)?,
        ],
    })
}

/// Fraction of finest-level pixels whose smallest channel exceeds 0.85.
pub fn background_fraction(p: &Pyramid) -> f64 {
    let img = p.levels.last().expect("levels");
    let c = img.channels();
    let bytes = img.bytes();
    let white = bytes
        .chunks(c)
        .filter(|px| px.iter().all(|&b| b as f64 / 255.0 > 0.85))
        .count();
    white as f64 / (img.width() * img.height()) as f64
}
