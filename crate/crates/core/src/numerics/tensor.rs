use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::bail;
use crate::Result;

/// Dense row-major tensor of `f64` values.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            bail!(InvalidShape, "zero extent in {shape:?}");
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            bail!(InvalidShape, "shape {shape:?} needs {n} values, got {}", data.len());
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            bail!(InvalidShape, "cannot reshape {:?} to {shape:?}", self.shape);
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Extents of a rank-4 `[N, C, H, W]` tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => bail!(InvalidShape, "expected rank 4, got {:?}", self.shape),
        }
    }

    /// Extents of a rank-3 `[C, H, W]` image.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [c, h, w] => Ok((c, h, w)),
            _ => bail!(InvalidShape, "expected rank 3, got {:?}", self.shape),
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            bail!(InvalidShape, "{:?} vs {:?}", self.shape, other.shape);
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Batch entry `n` of a rank-4 tensor as a rank-3 tensor.
    pub fn batch_item(&self, n: usize) -> Result<Tensor> {
        let (bn, c, h, w) = self.dims4()?;
        if n >= bn {
            bail!(InvalidShape, "batch index {n} >= {bn}");
        }
        let sz = c * h * w;
        Ok(Tensor {
            shape: vec![c, h, w],
            data: self.data[n * sz..(n + 1) * sz].to_vec(),
        })
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let Some(first) = items.first() else {
            bail!(InvalidShape, "stack of nothing");
        };
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.same_shape(t)?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }
}

fn conv_shapes(
    input: &Tensor,
    kernel: &Tensor,
    padding: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4()?;
    let (k, kc, kh, kw) = kernel.dims4()?;
    if kc != c {
        bail!(InvalidShape, "kernel expects {kc} input channels, input has {c}");
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        bail!(InvalidShape, "kernel extents must be odd, got {kh}x{kw}");
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        bail!(InvalidShape, "kernel {kh}x{kw} larger than padded input {h}x{w}");
    }
    let oh = h + 2 * padding - kh + 1;
    let ow = w + 2 * padding - kw + 1;
    Ok((n, c, h, w, k, kh, kw, oh, ow))
}

/// Output columns `[lo, hi)` whose tap `d` lands inside an input row of width `w`.
#[inline]
fn tap_range(d: usize, padding: usize, w: usize, ow: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(d);
    let hi = ow.min((w + padding).saturating_sub(d));
    (lo, hi.max(lo))
}

/// Stride-1 2-D cross-correlation with zero padding.
///
/// `input` is `[N, C, H, W]`, `kernel` is `[K, C, kh, kw]`, `bias` is `[K]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, padding: usize) -> Result<Tensor> {
    let (n, c, h, w, k, kh, kw, oh, ow) = conv_shapes(input, kernel, padding)?;
    if let Some(b) = bias {
        if b.shape() != [k] {
            bail!(InvalidShape, "bias {:?} for {k} output channels", b.shape());
        }
    }
    let mut out = Tensor::zeros(&[n, k, oh, ow]);
    let x = input.data();
    let wt = kernel.data();
    for ni in 0..n {
        for ki in 0..k {
            let o_off = (ni * k + ki) * oh * ow;
            let plane = &mut out.data[o_off..o_off + oh * ow];
            if let Some(b) = bias {
                plane.fill(b.data[ki]);
            }
            for ci in 0..c {
                let i_off = (ni * c + ci) * h * w;
                let w_off = (ki * c + ci) * kh * kw;
                for dy in 0..kh {
                    let (ylo, yhi) = tap_range(dy, padding, h, oh);
                    for dx in 0..kw {
                        let wv = wt[w_off + dy * kw + dx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (xlo, xhi) = tap_range(dx, padding, w, ow);
                        for oy in ylo..yhi {
                            let iy = oy + dy - padding;
                            let orow = &mut plane[oy * ow + xlo..oy * ow + xhi];
                            let ix0 = i_off + iy * w + xlo + dx - padding;
                            let irow = &x[ix0..ix0 + (xhi - xlo)];
                            for (o, &i) in orow.iter_mut().zip(irow) {
                                *o += wv * i;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, h, w, k, kh, kw, oh, ow) = conv_shapes(input, kernel, padding)?;
    if grad_out.shape() != [n, k, oh, ow] {
        bail!(InvalidShape, "grad_out {:?}, expected {:?}", grad_out.shape(), [n, k, oh, ow]);
    }
    let x = input.data();
    let wt = kernel.data();
    let g = grad_out.data();
    let mut dx = Tensor::zeros(input.shape());
    let mut dw = Tensor::zeros(kernel.shape());
    let mut db = Tensor::zeros(&[k]);
    for ni in 0..n {
        for ki in 0..k {
            let o_off = (ni * k + ki) * oh * ow;
            let gplane = &g[o_off..o_off + oh * ow];
            db.data[ki] += gplane.iter().sum::<f64>();
            for ci in 0..c {
                let i_off = (ni * c + ci) * h * w;
                let w_off = (ki * c + ci) * kh * kw;
                for dy in 0..kh {
                    let (ylo, yhi) = tap_range(dy, padding, h, oh);
                    for dxk in 0..kw {
                        let (xlo, xhi) = tap_range(dxk, padding, w, ow);
                        let len = xhi - xlo;
                        let wv = wt[w_off + dy * kw + dxk];
                        let mut acc = 0.0;
                        for oy in ylo..yhi {
                            let iy = oy + dy - padding;
                            let grow = &gplane[oy * ow + xlo..oy * ow + xhi];
                            let ix0 = i_off + iy * w + xlo + dxk - padding;
                            let irow = &x[ix0..ix0 + len];
                            acc += grow.iter().zip(irow).map(|(a, b)| a * b).sum::<f64>();
                            let drow = &mut dx.data[ix0..ix0 + len];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        }
                        dw.data[w_off + dy * kw + dxk] += acc;
                    }
                }
            }
        }
    }
    Ok((dx, dw, db))
}
