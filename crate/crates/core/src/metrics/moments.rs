use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::{Error, Result};

use super::linalg::{matmul, psd_sqrt, symmetric_eigen};

/// Mean and unbiased covariance of a feature population.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMoments {
    pub mean: Vec<f64>,
    /// Row-major `D x D`.
    pub cov: Vec<f64>,
    pub count: usize,
}

/// Running sums that merge exactly in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    dim: usize,
    count: usize,
    sum: Vec<f64>,
    outer: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            sum: vec![0.0; dim],
            outer: vec![0.0; dim * dim],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, f: &[f64]) -> Result<()> {
        if f.len() != self.dim {
            bail!(DimensionMismatch, "feature of length {} for dimension {}", f.len(), self.dim);
        }
        if f.iter().any(|v| !v.is_finite()) {
            bail!(Numeric, "non-finite feature");
        }
        self.count += 1;
        for i in 0..self.dim {
            self.sum[i] += f[i];
            for j in 0..self.dim {
                self.outer[i * self.dim + j] += f[i] * f[j];
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.dim != self.dim {
            bail!(DimensionMismatch, "merging dimension {} into {}", other.dim, self.dim);
        }
        self.count += other.count;
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.outer.iter_mut().zip(&other.outer).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn finish(&self) -> Result<FeatureMoments> {
        let n = self.count;
        if n < 2 {
            return Err(Error::UndersizedSet { needed: 2, got: n });
        }
        let d = self.dim;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n as f64).collect();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = (self.outer[i * d + j] - n as f64 * mean[i] * mean[j]) / (n - 1) as f64;
            }
        }
        for i in 0..d {
            for j in i + 1..d {
                let s = 0.5 * (cov[i * d + j] + cov[j * d + i]);
                cov[i * d + j] = s;
                cov[j * d + i] = s;
            }
        }
        Ok(FeatureMoments { mean, cov, count: n })
    }
}

impl FeatureMoments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = features.first() else {
            return Err(Error::UndersizedSet { needed: 2, got: 0 });
        };
        let mut acc = MomentAccumulator::new(first.len());
        for f in features {
            acc.push(f)?;
        }
        acc.finish()
    }

    /// Below `D + 1` samples the covariance is rank deficient.
    pub fn is_full_rank_sample(&self) -> bool {
        self.count > self.dim()
    }

    fn check(&self) -> Result<()> {
        let d = self.dim();
        if self.cov.len() != d * d {
            bail!(DimensionMismatch, "covariance of {} entries for dimension {d}", self.cov.len());
        }
        if self.mean.iter().chain(&self.cov).any(|v| !v.is_finite()) {
            bail!(Numeric, "non-finite moments");
        }
        Ok(())
    }
}

/// `‖μa−μb‖² + tr(Σa + Σb − 2(Σa Σb)^½)`, with the cross term evaluated as
/// `tr((Σa^½ Σb Σa^½)^½)` through symmetric eigen-decompositions.
pub fn frechet_distance(a: &FeatureMoments, b: &FeatureMoments) -> Result<f64> {
    a.check()?;
    b.check()?;
    let d = a.dim();
    if b.dim() != d {
        bail!(DimensionMismatch, "moments of dimension {d} and {}", b.dim());
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let trace = |m: &[f64]| (0..d).map(|i| m[i * d + i]).sum::<f64>();
    let sa = psd_sqrt(&a.cov, d);
    let inner = matmul(&matmul(&sa, &b.cov, d), &sa, d);
    let mut sym = inner.clone();
    for i in 0..d {
        for j in 0..d {
            sym[i * d + j] = 0.5 * (inner[i * d + j] + inner[j * d + i]);
        }
    }
    let (vals, _) = symmetric_eigen(&sym, d);
    let cross: f64 = vals.iter().map(|&l| crate::numerics::math::sqrt(l.max(0.0))).sum();
    let fd = mean_term + trace(&a.cov) + trace(&b.cov) - 2.0 * cross;
    if fd < 0.0 {
        let scale = 1.0 + trace(&a.cov) + trace(&b.cov);
        if fd < -1e-8 * scale {
            bail!(Numeric, "negative Fréchet distance {fd}");
        }
        return Ok(0.0);
    }
    Ok(fd)
}
