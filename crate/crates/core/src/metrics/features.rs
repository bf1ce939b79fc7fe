use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::math;
use crate::rng::NoiseStream;
use crate::synthdata::area_resample;
use crate::{Result, Tensor};

/// Deterministic map from an image patch to a fixed-length vector.
pub trait FeatureExtractor: Send + Sync {
    /// Identifier recorded in metric reports.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    /// Side length patches are resized to before extraction.
    fn input_size(&self) -> usize;

    /// `patch` is `[C, H, W]` with values in `[0, 1]`.
    fn extract(&self, patch: &Tensor) -> Result<Vec<f64>>;
}

const BINS: usize = 8;
const FILTERS: usize = 16;
const TAPS: usize = 5;
const INPUT: usize = 32;

/// Colour histograms, seeded zero-mean 5x5 filter energies and Haar detail
/// energies of a 32x32, 3-channel rendition of the patch.
#[derive(Debug, Clone, PartialEq)]
pub struct HandcraftedExtractor {
    seed: u64,
    filters: Vec<[f64; TAPS * TAPS]>,
}

pub fn default_feature_extractor(seed: u64) -> HandcraftedExtractor {
    let mut rng = NoiseStream::new(seed);
    let filters = (0..FILTERS)
        .map(|_| {
            let mut f = [0.0; TAPS * TAPS];
            f.iter_mut().for_each(|v| *v = rng.normal());
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            f.iter_mut().for_each(|v| *v -= mean);
            let norm = math::sqrt(f.iter().map(|v| v * v).sum::<f64>());
            f.iter_mut().for_each(|v| *v /= norm);
            f
        })
        .collect();
    HandcraftedExtractor { seed, filters }
}

fn haar_detail(plane: &[f64], n: usize) -> (f64, Vec<f64>) {
    let h = n / 2;
    let mut approx = Vec::with_capacity(h * h);
    let mut energy = 0.0;
    for y in 0..h {
        for x in 0..h {
            let a = plane[2 * y * n + 2 * x];
            let b = plane[2 * y * n + 2 * x + 1];
            let c = plane[(2 * y + 1) * n + 2 * x];
            let d = plane[(2 * y + 1) * n + 2 * x + 1];
            approx.push((a + b + c + d) / 2.0);
            let lh = (a - b + c - d) / 2.0;
            let hl = (a + b - c - d) / 2.0;
            let hh = (a - b - c + d) / 2.0;
            energy += lh * lh + hl * hl + hh * hh;
        }
    }
    (energy / (h * h) as f64, approx)
}

impl FeatureExtractor for HandcraftedExtractor {
    fn id(&self) -> String {
        format!("handcrafted-v1-seed{}", self.seed)
    }

    fn dim(&self) -> usize {
        3 * BINS + 3 * FILTERS + 3 * 2
    }

    fn input_size(&self) -> usize {
        INPUT
    }

    fn extract(&self, patch: &Tensor) -> Result<Vec<f64>> {
        let (c, _, _) = patch.dims3()?;
        if c != 3 {
            return Err(crate::Error::InvalidShape(format!("{c}-channel patch, expected 3")));
        }
        let img = area_resample(patch, INPUT, INPUT)?;
        let d = img.data();
        let n = INPUT;
        let hw = n * n;
        let mut out = Vec::with_capacity(self.dim());
        for ch in 0..3 {
            let mut hist = [0.0; BINS];
            for &v in &d[ch * hw..(ch + 1) * hw] {
                let b = ((v.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1);
                hist[b] += 1.0 / hw as f64;
            }
            out.extend_from_slice(&hist);
        }
        let valid = n - TAPS + 1;
        for ch in 0..3 {
            let plane = &d[ch * hw..(ch + 1) * hw];
            for f in &self.filters {
                let mut acc = 0.0;
                for y in 0..valid {
                    for x in 0..valid {
                        let mut r = 0.0;
                        for ky in 0..TAPS {
                            let row = &plane[(y + ky) * n + x..(y + ky) * n + x + TAPS];
                            for kx in 0..TAPS {
                                r += f[ky * TAPS + kx] * row[kx];
                            }
                        }
                        acc += r.abs();
                    }
                }
                out.push(acc / (valid * valid) as f64);
            }
        }
        for ch in 0..3 {
            let (e1, approx) = haar_detail(&d[ch * hw..(ch + 1) * hw], n);
            let (e2, _) = haar_detail(&approx, n / 2);
            out.push(e1);
            out.push(e2);
        }
        Ok(out)
    }
}
