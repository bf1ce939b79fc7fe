use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::{Error, Result};

use super::StepInfo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

impl ScheduleKind {
    pub fn code(self) -> u32 {
        match self {
            ScheduleKind::Cosine => 0,
            ScheduleKind::Linear => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(ScheduleKind::Cosine),
            1 => Ok(ScheduleKind::Linear),
            _ => bail!(Format, "unknown schedule kind {code}"),
        }
    }
}

/// Per-step coefficients of a discrete variance-preserving chain.
///
/// Steps are indexed `1..=len()`; index `t` reads slot `t - 1`. A schedule
/// may be a respaced sub-chain of a longer training schedule, in which case
/// `time(t)` still reports the position on the original time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    train_steps: usize,
    origin: Vec<usize>,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    posterior_var: Vec<f64>,
}

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

fn cosine_f(u: f64) -> f64 {
    let c = math::cos((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * core::f64::consts::FRAC_PI_2);
    c * c
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            bail!(Config, "schedule needs at least one step");
        }
        let t_max = steps as f64;
        let betas: Vec<f64> = (1..=steps)
            .map(|t| match kind {
                ScheduleKind::Cosine => {
                    let b = 1.0 - cosine_f(t as f64 / t_max) / cosine_f((t - 1) as f64 / t_max);
                    b.clamp(1e-8, MAX_BETA)
                }
                ScheduleKind::Linear => {
                    let scale = 1000.0 / t_max;
                    let (lo, hi) = (1e-4 * scale, 0.02 * scale);
                    let frac = if steps == 1 { 0.0 } else { (t - 1) as f64 / (t_max - 1.0) };
                    (lo + (hi - lo) * frac).min(MAX_BETA)
                }
            })
            .collect();
        Ok(Self::from_betas(kind, steps, (1..=steps).collect(), betas))
    }

    fn from_betas(kind: ScheduleKind, train_steps: usize, origin: Vec<usize>, betas: Vec<f64>) -> Self {
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        let posterior_var = (0..betas.len())
            .map(|i| {
                if i == 0 {
                    betas[0]
                } else {
                    (1.0 - alpha_bars[i - 1]) / (1.0 - alpha_bars[i]) * betas[i]
                }
            })
            .collect();
        Self {
            kind,
            train_steps,
            origin,
            betas,
            alpha_bars,
            posterior_var,
        }
    }

    /// A shorter chain visiting `steps` evenly spaced points of this one.
    pub fn respaced(&self, steps: usize) -> Result<Self> {
        let n = self.len();
        if steps == 0 || steps > n {
            bail!(Config, "cannot respace {n} steps to {steps}");
        }
        if steps == n {
            return Ok(self.clone());
        }
        let picks: Vec<usize> = (1..=steps)
            .map(|i| math::round(i as f64 * n as f64 / steps as f64) as usize)
            .collect();
        let mut prev = 1.0;
        let mut betas = Vec::with_capacity(steps);
        let mut origin = Vec::with_capacity(steps);
        for &p in &picks {
            let ab = self.alpha_bars[p - 1];
            betas.push((1.0 - ab / prev).clamp(1e-12, MAX_BETA));
            origin.push(self.origin[p - 1]);
            prev = ab;
        }
        Ok(Self::from_betas(self.kind, self.train_steps, origin, betas))
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// Length of the training schedule this chain was derived from.
    pub fn train_steps(&self) -> usize {
        self.train_steps
    }

    pub fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.len() {
            return Err(Error::Range { t, steps: self.len() });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.betas[self.check(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(1.0 - self.beta(t)?)
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bars[self.check(t)?])
    }

    /// Noise scale `√(1 − ᾱ_t)`.
    pub fn sigma(&self, t: usize) -> Result<f64> {
        Ok(math::sqrt(1.0 - self.alpha_bar(t)?))
    }

    /// Posterior variance of `x_{t-1}` given `x_t` and `x0`, with the
    /// first step clipped to `β_1`.
    pub fn posterior_variance(&self, t: usize) -> Result<f64> {
        Ok(self.posterior_var[self.check(t)?])
    }

    /// Drift coefficient of the continuous forward process, `−½β_t` per unit `x`.
    pub fn drift_coefficient(&self, t: usize) -> Result<f64> {
        Ok(-0.5 * self.beta(t)?)
    }

    /// Diffusion coefficient `√β_t`.
    pub fn diffusion_coefficient(&self, t: usize) -> Result<f64> {
        Ok(math::sqrt(self.beta(t)?))
    }

    /// Normalized time `t / T` on the training axis.
    pub fn time(&self, t: usize) -> Result<f64> {
        Ok(self.origin[self.check(t)?] as f64 / self.train_steps as f64)
    }

    pub fn step_info(&self, t: usize) -> Result<StepInfo> {
        Ok(StepInfo {
            time: self.time(t)?,
            alpha_bar: self.alpha_bar(t)?,
        })
    }
}

/// Sinusoidal embedding of a normalized time; the first half holds sines,
/// the second cosines, over geometrically spaced frequencies.
pub fn c_noise_embedding(time: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    let freqs: Vec<f64> = (0..half)
        .map(|i| math::exp(-math::ln(10_000.0) * i as f64 / half as f64))
        .collect();
    out.extend(freqs.iter().map(|f| math::sin(time * 1000.0 * f)));
    out.extend(freqs.iter().map(|f| math::cos(time * 1000.0 * f)));
    out.resize(dim, 0.0);
    out
}
