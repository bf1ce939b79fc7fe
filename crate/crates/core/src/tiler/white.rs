use crate::numerics::math;
use crate::{Result, Tensor};

use super::Rect;

/// Thresholds deciding that a region is background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteRule {
    /// A pixel is white when its smallest channel exceeds this.
    pub min_channel: f64,
    /// Required fraction of white pixels.
    pub fraction: f64,
    /// Required mean over all pixels and channels.
    pub mean: f64,
}

impl Default for WhiteRule {
    fn default() -> Self {
        Self {
            min_channel: 0.85,
            fraction: 0.95,
            mean: 0.90,
        }
    }
}

impl WhiteRule {
    /// `region` is `[C, H, W]` with values in `[0, 1]`.
    pub fn is_white(&self, region: &Tensor) -> bool {
        let Ok((c, h, w)) = region.dims3() else {
            return false;
        };
        let hw = h * w;
        let d = region.data();
        let white = (0..hw)
            .filter(|&p| (0..c).map(|ch| d[ch * hw + p]).fold(f64::INFINITY, f64::min) > self.min_channel)
            .count();
        white as f64 >= self.fraction * hw as f64 && region.mean() > self.mean
    }
}

pub fn is_white_patch(region: &Tensor) -> bool {
    WhiteRule::default().is_white(region)
}

/// Bilinear samples of `prev` (`[C, Hp, Wp]`) at the centres of the pixels of
/// `rect` on a `canvas x canvas` grid covering the same extent.
///
/// The mapping depends only on absolute canvas coordinates, so overlapping
/// rects receive identical values on shared pixels.
pub fn bilinear_footprint(prev: &Tensor, canvas: usize, rect: Rect) -> Result<Tensor> {
    let (c, hp, wp) = prev.dims3()?;
    let d = prev.data();
    let coord = |v: usize, n: usize| -> (usize, usize, f64) {
        let s = ((v as f64 + 0.5) * n as f64 / canvas as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = math::floor(s) as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, s - lo as f64)
    };
    let ys: alloc::vec::Vec<_> = (0..rect.h).map(|dy| coord(rect.y + dy, hp)).collect();
    let xs: alloc::vec::Vec<_> = (0..rect.w).map(|dx| coord(rect.x + dx, wp)).collect();
    Ok(Tensor::from_fn(&[c, rect.h, rect.w], |k| {
        let ch = k / (rect.h * rect.w);
        let (y0, y1, fy) = ys[(k / rect.w) % rect.h];
        let (x0, x1, fx) = xs[k % rect.w];
        let at = |y: usize, x: usize| d[(ch * hp + y) * wp + x];
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_images() {
        assert!(is_white_patch(&Tensor::full(&[3, 8, 8], 1.0)));
        assert!(!is_white_patch(&Tensor::zeros(&[3, 8, 8])));
    }

    #[test]
    fn ninety_four_percent_white_is_not_enough() {
        let t = Tensor::from_fn(&[3, 10, 10], |k| if k % 100 < 94 { 1.0 } else { 0.2 });
        assert!(!is_white_patch(&t));
        let t = Tensor::from_fn(&[3, 10, 10], |k| if k % 100 < 95 { 1.0 } else { 0.2 });
        assert!(is_white_patch(&t));
    }

    #[test]
    fn footprint_of_constant_is_constant() {
        let prev = Tensor::full(&[3, 5, 5], 0.7);
        let f = bilinear_footprint(&prev, 20, Rect { y: 4, x: 8, h: 6, w: 6 }).unwrap();
        assert!(f.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }
}
