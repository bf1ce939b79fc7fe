use crate::error::bail;
use crate::numerics::math;
use crate::tiler::Rect;
use crate::{Result, Tensor};

/// How a context window whose centred origin falls between pixels is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ContextAlignment {
    /// Round the window origin to the nearest pixel.
    #[default]
    Snap,
    /// Reject windows that do not start on a whole pixel.
    Strict,
}

/// Centre of `rect` (on a `canvas`-sized grid) in the coordinates of a
/// `prev`-sized grid covering the same extent.
pub fn map_center(rect: Rect, canvas: usize, prev: usize) -> (f64, f64) {
    let scale = prev as f64 / canvas as f64;
    (
        (rect.y as f64 + rect.h as f64 / 2.0) * scale,
        (rect.x as f64 + rect.w as f64 / 2.0) * scale,
    )
}

fn origin(center: f64, window: usize, alignment: ContextAlignment) -> Result<i64> {
    let o = center - window as f64 / 2.0;
    let r = math::round(o);
    if alignment == ContextAlignment::Strict && (o - r).abs() > 1e-9 {
        bail!(Geometry, "context window origin {o} is not a whole pixel");
    }
    Ok(r as i64)
}

/// `window x window` crop of `prev` (`[C, H, W]`) centred on `center`, with
/// white (1.0) wherever the window leaves the image.
pub fn center_context_crop(
    prev: &Tensor,
    center: (f64, f64),
    window: usize,
    alignment: ContextAlignment,
) -> Result<Tensor> {
    let (c, h, w) = prev.dims3()?;
    if window == 0 {
        bail!(Geometry, "empty context window");
    }
    let oy = origin(center.0, window, alignment)?;
    let ox = origin(center.1, window, alignment)?;
    let d = prev.data();
    Ok(Tensor::from_fn(&[c, window, window], |k| {
        let ch = k / (window * window);
        let y = oy + ((k / window) % window) as i64;
        let x = ox + (k % window) as i64;
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            1.0
        } else {
            d[(ch * h + y as usize) * w + x as usize]
        }
    }))
}
