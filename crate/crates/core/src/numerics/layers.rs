//! Differentiable layers.
//!
//! Each layer is a small description (parameter names, extents) plus an
//! optional cache of the last training-mode input. `forward` is pure and
//! reentrant; `forward_train` caches the input that `backward` needs, and
//! `backward` consumes that cache, accumulating parameter gradients into the
//! store and returning the gradient with respect to the input.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::{conv2d, conv2d_backward};
use crate::rng::NoiseStream;
use crate::{Error, Result, Tensor};

pub trait Layer {
    fn forward(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor>;

    fn forward_train(&mut self, params: &ParamStore, x: &Tensor) -> Result<Tensor>;

    fn backward(&mut self, params: &mut ParamStore, grad_out: &Tensor) -> Result<Tensor>;
}

fn take_cache(cache: &mut Option<Tensor>, layer: &str) -> Result<Tensor> {
    cache
        .take()
        .ok_or_else(|| Error::State(format!("{layer}: backward called before forward")))
}

fn uniform_fill(t: &mut Tensor, bound: f64, rng: &mut NoiseStream) {
    for v in t.data_mut() {
        *v = (2.0 * rng.uniform() - 1.0) * bound;
    }
}

/// Same-padded 2-D convolution with bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "conv kernel must be odd");
        Self {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            cache: None,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    /// Fan-in scaled uniform weights, zero bias.
    pub fn init(&self, params: &mut ParamStore, rng: &mut NoiseStream) {
        let mut w = Tensor::zeros(&[self.out_channels, self.in_channels, self.kernel, self.kernel]);
        let fan_in = (self.in_channels * self.kernel * self.kernel) as f64;
        uniform_fill(&mut w, 1.0 / math::sqrt(fan_in), rng);
        params.insert(self.weight_name(), w);
        params.insert(self.bias_name(), Tensor::zeros(&[self.out_channels]));
    }

    pub fn init_zero(&self, params: &mut ParamStore) {
        params.insert(
            self.weight_name(),
            Tensor::zeros(&[self.out_channels, self.in_channels, self.kernel, self.kernel]),
        );
        params.insert(self.bias_name(), Tensor::zeros(&[self.out_channels]));
    }

    fn padding(&self) -> usize {
        (self.kernel - 1) / 2
    }
}

impl Layer for Conv2d {
    fn forward(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let w = params.get(&self.weight_name())?;
        let b = params.get(&self.bias_name())?;
        conv2d(x, w, Some(b), self.padding())
    }

    fn forward_train(&mut self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(params, x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, params: &mut ParamStore, grad_out: &Tensor) -> Result<Tensor> {
        let x = take_cache(&mut self.cache, &self.name)?;
        let (dx, dw, db) = conv2d_backward(&x, params.get(&self.weight_name())?, grad_out, self.padding())?;
        params.accumulate(&self.weight_name(), &dw)?;
        params.accumulate(&self.bias_name(), &db)?;
        Ok(dx)
    }
}

/// Fully connected layer `y = x Wᵀ + b` over `[N, in]` inputs.
#[derive(Debug, Clone)]
pub struct Dense {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Self {
            name: name.into(),
            in_dim,
            out_dim,
            cache: None,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, params: &mut ParamStore, rng: &mut NoiseStream) {
        let mut w = Tensor::zeros(&[self.out_dim, self.in_dim]);
        uniform_fill(&mut w, 1.0 / math::sqrt(self.in_dim as f64), rng);
        params.insert(self.weight_name(), w);
        params.insert(self.bias_name(), Tensor::zeros(&[self.out_dim]));
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        match *x.shape() {
            [n, d] if d == self.in_dim => Ok(n),
            _ => bail!(InvalidShape, "{}: input {:?}, expected [N, {}]", self.name, x.shape(), self.in_dim),
        }
    }
}

impl Layer for Dense {
    fn forward(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let n = self.check(x)?;
        let w = params.get(&self.weight_name())?.data();
        let b = params.get(&self.bias_name())?.data();
        let mut y = Tensor::zeros(&[n, self.out_dim]);
        let xd = x.data();
        for r in 0..n {
            let xr = &xd[r * self.in_dim..(r + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let wr = &w[o * self.in_dim..(o + 1) * self.in_dim];
                y.data_mut()[r * self.out_dim + o] =
                    b[o] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
            }
        }
        Ok(y)
    }

    fn forward_train(&mut self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(params, x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, params: &mut ParamStore, grad_out: &Tensor) -> Result<Tensor> {
        let x = take_cache(&mut self.cache, &self.name)?;
        let n = self.check(&x)?;
        if grad_out.shape() != [n, self.out_dim] {
            bail!(InvalidShape, "{}: grad {:?}", self.name, grad_out.shape());
        }
        let (din, dout) = (self.in_dim, self.out_dim);
        let g = grad_out.data();
        let xd = x.data();
        let mut dw = Tensor::zeros(&[dout, din]);
        let mut db = Tensor::zeros(&[dout]);
        let mut dx = Tensor::zeros(&[n, din]);
        let w = params.get(&self.weight_name())?.data();
        for r in 0..n {
            for o in 0..dout {
                let go = g[r * dout + o];
                db.data_mut()[o] += go;
                for i in 0..din {
                    dw.data_mut()[o * din + i] += go * xd[r * din + i];
                    dx.data_mut()[r * din + i] += go * w[o * din + i];
                }
            }
        }
        params.accumulate(&self.weight_name(), &dw)?;
        params.accumulate(&self.bias_name(), &db)?;
        Ok(dx)
    }
}

/// `x · sigmoid(x)`
#[derive(Debug, Clone, Default)]
pub struct Silu {
    cache: Option<Tensor>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + math::exp(-x))
}

impl Silu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Silu {
    fn forward(&self, _params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(x.map(|v| v * sigmoid(v)))
    }

    fn forward_train(&mut self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(params, x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, _params: &mut ParamStore, grad_out: &Tensor) -> Result<Tensor> {
        let x = take_cache(&mut self.cache, "silu")?;
        x.zip_map(grad_out, |v, g| {
            let s = sigmoid(v);
            g * s * (1.0 + v * (1.0 - s))
        })
    }
}

/// Group normalization over `[N, C, H, W]` with a per-channel affine map.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub name: String,
    pub groups: usize,
    pub channels: usize,
    pub eps: f64,
    cache: Option<Tensor>,
}

impl GroupNorm {
    pub fn new(name: impl Into<String>, groups: usize, channels: usize) -> Self {
        assert!(groups > 0 && channels % groups == 0, "channels must divide into groups");
        Self {
            name: name.into(),
            groups,
            channels,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn gamma_name(&self) -> String {
        format!("{}.gamma", self.name)
    }

    pub fn beta_name(&self) -> String {
        format!("{}.beta", self.name)
    }

    pub fn init(&self, params: &mut ParamStore) {
        params.insert(self.gamma_name(), Tensor::full(&[self.channels], 1.0));
        params.insert(self.beta_name(), Tensor::zeros(&[self.channels]));
    }

    /// Per-(sample, group) mean and inverse standard deviation.
    fn stats(&self, x: &Tensor) -> Result<Vec<(f64, f64)>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels {
            bail!(InvalidShape, "{}: {c} channels, expected {}", self.name, self.channels);
        }
        let gsize = (c / self.groups) * h * w;
        let d = x.data();
        let mut out = Vec::with_capacity(n * self.groups);
        for ni in 0..n {
            for g in 0..self.groups {
                let off = ni * c * h * w + g * gsize;
                let s = &d[off..off + gsize];
                let mean = s.iter().sum::<f64>() / gsize as f64;
                let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / gsize as f64;
                out.push((mean, 1.0 / math::sqrt(var + self.eps)));
            }
        }
        Ok(out)
    }
}

impl Layer for GroupNorm {
    fn forward(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let stats = self.stats(x)?;
        let (n, c, h, w) = x.dims4()?;
        let gamma = params.get(&self.gamma_name())?.data();
        let beta = params.get(&self.beta_name())?.data();
        let cpg = c / self.groups;
        let hw = h * w;
        let mut y = x.clone();
        let yd = y.data_mut();
        for ni in 0..n {
            for ci in 0..c {
                let (mean, inv) = stats[ni * self.groups + ci / cpg];
                let off = (ni * c + ci) * hw;
                for v in &mut yd[off..off + hw] {
                    *v = gamma[ci] * (*v - mean) * inv + beta[ci];
                }
            }
        }
        Ok(y)
    }

    fn forward_train(&mut self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(params, x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, params: &mut ParamStore, grad_out: &Tensor) -> Result<Tensor> {
        let x = take_cache(&mut self.cache, &self.name)?;
        x.same_shape(grad_out)?;
        let stats = self.stats(&x)?;
        let (n, c, h, w) = x.dims4()?;
        let cpg = c / self.groups;
        let hw = h * w;
        let gsize = (cpg * hw) as f64;
        let gamma = params.get(&self.gamma_name())?.clone();
        let xd = x.data();
        let g = grad_out.data();
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        let mut dx = Tensor::zeros(x.shape());
        for ni in 0..n {
            for gi in 0..self.groups {
                let (mean, inv) = stats[ni * self.groups + gi];
                // Sums of dxhat and dxhat * xhat over the group.
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for ci in gi * cpg..(gi + 1) * cpg {
                    let off = (ni * c + ci) * hw;
                    for k in off..off + hw {
                        let xhat = (xd[k] - mean) * inv;
                        dgamma.data_mut()[ci] += g[k] * xhat;
                        dbeta.data_mut()[ci] += g[k];
                        let dxhat = g[k] * gamma.data()[ci];
                        s1 += dxhat;
                        s2 += dxhat * xhat;
                    }
                }
                let m1 = s1 / gsize;
                let m2 = s2 / gsize;
                for ci in gi * cpg..(gi + 1) * cpg {
                    let off = (ni * c + ci) * hw;
                    for k in off..off + hw {
                        let xhat = (xd[k] - mean) * inv;
                        let dxhat = g[k] * gamma.data()[ci];
                        dx.data_mut()[k] = inv * (dxhat - m1 - xhat * m2);
                    }
                }
            }
        }
        params.accumulate(&self.gamma_name(), &dgamma)?;
        params.accumulate(&self.beta_name(), &dbeta)?;
        Ok(dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    Nearest,
    /// Half-pixel-centred bilinear with edge clamping. An exact 2x reduction
    /// is a 2x2 box average.
    Bilinear,
}

/// Source taps `(i0, i1, w0, w1)` for each output coordinate along one axis.
fn axis_taps(input: usize, output: usize, mode: ResizeMode) -> Vec<(usize, usize, f64, f64)> {
    let ratio = input as f64 / output as f64;
    (0..output)
        .map(|o| match mode {
            ResizeMode::Nearest => {
                let i = (math::floor((o as f64 + 0.5) * ratio) as usize).min(input - 1);
                (i, i, 1.0, 0.0)
            }
            ResizeMode::Bilinear => {
                let src = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (input - 1) as f64);
                let i0 = math::floor(src) as usize;
                let i1 = (i0 + 1).min(input - 1);
                let w1 = src - i0 as f64;
                (i0, i1, 1.0 - w1, w1)
            }
        })
        .collect()
}

/// Resizes the spatial axes of `[N, C, H, W]`.
pub fn resize(x: &Tensor, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if out_h == 0 || out_w == 0 {
        bail!(InvalidShape, "resize to {out_h}x{out_w}");
    }
    let ty = axis_taps(h, out_h, mode);
    let tx = axis_taps(w, out_w, mode);
    let mut y = Tensor::zeros(&[n, c, out_h, out_w]);
    let xd = x.data();
    let yd = y.data_mut();
    for p in 0..n * c {
        let src = &xd[p * h * w..(p + 1) * h * w];
        let dst = &mut yd[p * out_h * out_w..(p + 1) * out_h * out_w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                dst[oy * out_w + ox] = wy0 * (wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1])
                    + wy1 * (wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1]);
            }
        }
    }
    Ok(y)
}

/// Adjoint of [`resize`]: scatters `grad_out` back onto an `in_h x in_w` grid.
pub fn resize_backward(grad_out: &Tensor, in_h: usize, in_w: usize, mode: ResizeMode) -> Result<Tensor> {
    let (n, c, oh, ow) = grad_out.dims4()?;
    let ty = axis_taps(in_h, oh, mode);
    let tx = axis_taps(in_w, ow, mode);
    let mut dx = Tensor::zeros(&[n, c, in_h, in_w]);
    let g = grad_out.data();
    let dd = dx.data_mut();
    for p in 0..n * c {
        let src = &g[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dd[p * in_h * in_w..(p + 1) * in_h * in_w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let v = src[oy * ow + ox];
                dst[y0 * in_w + x0] += wy0 * wx0 * v;
                dst[y0 * in_w + x1] += wy0 * wx1 * v;
                dst[y1 * in_w + x0] += wy1 * wx0 * v;
                dst[y1 * in_w + x1] += wy1 * wx1 * v;
            }
        }
    }
    Ok(dx)
}

/// Resize of a single `[C, H, W]` image.
pub fn resize_image(img: &Tensor, out_h: usize, out_w: usize, mode: ResizeMode) -> Result<Tensor> {
    let (c, h, w) = img.dims3()?;
    let x = img.clone().reshape(&[1, c, h, w])?;
    resize(&x, out_h, out_w, mode)?.reshape(&[c, out_h, out_w])
}

#[derive(Debug, Clone)]
pub struct Resize {
    pub out_h: usize,
    pub out_w: usize,
    pub mode: ResizeMode,
    cache: Option<(usize, usize)>,
}

impl Resize {
    pub fn new(out_h: usize, out_w: usize, mode: ResizeMode) -> Self {
        Self {
            out_h,
            out_w,
            mode,
            cache: None,
        }
    }
}

impl Layer for Resize {
    fn forward(&self, _params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        resize(x, self.out_h, self.out_w, self.mode)
    }

    fn forward_train(&mut self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        self.cache = Some((h, w));
        self.forward(params, x)
    }

    fn backward(&mut self, _params: &mut ParamStore, grad_out: &Tensor) -> Result<Tensor> {
        let (h, w) = self
            .cache
            .take()
            .ok_or_else(|| Error::State("resize: backward called before forward".into()))?;
        resize_backward(grad_out, h, w, self.mode)
    }
}

/// Concatenates `[N, Ci, H, W]` tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        bail!(InvalidShape, "concat of nothing");
    };
    let (n, _, h, w) = first.dims4()?;
    let mut total = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            bail!(InvalidShape, "concat {:?} with {:?}", first.shape(), p.shape());
        }
        total += pc;
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * total * hw);
    for ni in 0..n {
        for p in parts {
            let pc = p.shape()[1];
            data.extend_from_slice(&p.data()[ni * pc * hw..(ni + 1) * pc * hw]);
        }
    }
    Tensor::new(&[n, total, h, w], data)
}

/// Inverse of [`concat_channels`]: splits along channels into the given widths.
pub fn split_channels(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let (n, c, h, w) = x.dims4()?;
    if widths.iter().sum::<usize>() != c {
        bail!(InvalidShape, "split {widths:?} of {c} channels");
    }
    let hw = h * w;
    let mut out: Vec<Vec<f64>> = widths.iter().map(|&wc| Vec::with_capacity(n * wc * hw)).collect();
    for ni in 0..n {
        let mut start = (ni * c) * hw;
        for (k, &wc) in widths.iter().enumerate() {
            out[k].extend_from_slice(&x.data()[start..start + wc * hw]);
            start += wc * hw;
        }
    }
    out.into_iter()
        .zip(widths)
        .map(|(d, &wc)| Tensor::new(&[n, wc, h, w], d))
        .collect()
}

/// Adds a per-sample, per-channel bias `[N, C]` to `[N, C, H, W]`.
pub fn add_channel_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if bias.shape() != [n, c] {
        bail!(InvalidShape, "channel bias {:?} for {:?}", bias.shape(), x.shape());
    }
    let hw = h * w;
    let mut y = x.clone();
    for (p, chunk) in y.data_mut().chunks_mut(hw).enumerate() {
        let b = bias.data()[p];
        chunk.iter_mut().for_each(|v| *v += b);
    }
    Ok(y)
}

/// Gradient of [`add_channel_bias`] with respect to the bias.
pub fn channel_bias_grad(grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = grad_out.dims4()?;
    let sums = grad_out.data().chunks(h * w).map(|ch| ch.iter().sum()).collect();
    Tensor::new(&[n, c], sums)
}
