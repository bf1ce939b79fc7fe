use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::{Result, Tensor};

use super::{prediction_from_eps, Conditioning, Denoiser, PredictionTarget, StepInfo};

/// Exact score of the noised marginal when data is `N(μ, s²I)`:
/// `−(x_t − √ᾱ·μ) / (ᾱ·s² + 1 − ᾱ)`.
pub fn analytic_gaussian_score(x_t: &Tensor, alpha_bar: f64, mu: f64, s: f64) -> Tensor {
    let a = math::sqrt(alpha_bar);
    let var = alpha_bar * s * s + 1.0 - alpha_bar;
    x_t.map(|x| -(x - a * mu) / var)
}

fn per_item<F>(x_t: &Tensor, steps: &[StepInfo], target: PredictionTarget, mut eps_of: F) -> Result<Tensor>
where
    F: FnMut(&Tensor, f64) -> Tensor,
{
    let (n, c, h, w) = x_t.dims4()?;
    if steps.len() != n {
        bail!(InvalidShape, "{} step infos for batch of {n}", steps.len());
    }
    let mut items = Vec::with_capacity(n);
    for (i, st) in steps.iter().enumerate() {
        let xi = x_t.batch_item(i)?;
        let eps = eps_of(&xi, st.alpha_bar);
        items.push(prediction_from_eps(&xi, &eps, st.alpha_bar, target)?);
    }
    Tensor::stack(&items)?.reshape(&[n, c, h, w])
}

/// Denoiser whose output is exact for data `N(μ, s²I)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianOracle {
    pub mu: f64,
    pub s: f64,
    pub target: PredictionTarget,
}

impl Denoiser for GaussianOracle {
    fn target(&self) -> PredictionTarget {
        self.target
    }

    fn predict(&self, x_t: &Tensor, steps: &[StepInfo], _cond: Option<&Tensor>) -> Result<Tensor> {
        per_item(x_t, steps, self.target, |x, ab| {
            let score = analytic_gaussian_score(x, ab, self.mu, self.s);
            score.scale(-math::sqrt(1.0 - ab))
        })
    }
}

/// Denoiser whose output is exact for data concentrated at a single value.
#[derive(Debug, Clone, Copy)]
pub struct PointMassOracle {
    pub value: f64,
    pub target: PredictionTarget,
}

impl Denoiser for PointMassOracle {
    fn target(&self) -> PredictionTarget {
        self.target
    }

    fn predict(&self, x_t: &Tensor, steps: &[StepInfo], _cond: Option<&Tensor>) -> Result<Tensor> {
        per_item(x_t, steps, self.target, |x, ab| {
            let a = math::sqrt(ab);
            let s = math::sqrt(1.0 - ab);
            x.map(|v| (v - a * self.value) / s)
        })
    }
}

/// Wraps a denoiser so it declares `conditioning` while ignoring the
/// conditioning channels it receives; lets analytic oracles stand in for
/// conditioned networks.
#[derive(Debug, Clone, Copy)]
pub struct WithConditioning<D> {
    pub inner: D,
    pub conditioning: Conditioning,
}

impl<D: Denoiser> Denoiser for WithConditioning<D> {
    fn target(&self) -> PredictionTarget {
        self.inner.target()
    }

    fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    fn predict(&self, x_t: &Tensor, steps: &[StepInfo], _cond: Option<&Tensor>) -> Result<Tensor> {
        self.inner.predict(x_t, steps, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_vanishes_at_scaled_mean() {
        let ab = 0.3;
        let x = Tensor::full(&[3], math::sqrt(ab) * 1.5);
        let sc = analytic_gaussian_score(&x, ab, 1.5, 0.4);
        assert!(sc.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_spread_is_point_mass_score() {
        let ab = 0.6;
        let x = Tensor::from_fn(&[4], |i| i as f64 * 0.3 - 0.5);
        let sc = analytic_gaussian_score(&x, ab, 0.2, 0.0);
        for (s, xv) in sc.data().iter().zip(x.data()) {
            let expect = -(xv - math::sqrt(ab) * 0.2) / (1.0 - ab);
            assert!((s - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn score_matches_log_density_differences() {
        // log N(x; √ᾱμ, v) = −(x − √ᾱμ)²/(2v) + const
        let (ab, mu, s) = (0.45, -0.3, 0.8);
        let v = ab * s * s + 1.0 - ab;
        let logp = |x: f64| -(x - math::sqrt(ab) * mu).powi(2) / (2.0 * v);
        for &x in &[-2.0, -0.1, 0.0, 0.7, 3.1] {
            let h = 1e-5;
            let fd = (logp(x + h) - logp(x - h)) / (2.0 * h);
            let sc = analytic_gaussian_score(&Tensor::full(&[1], x), ab, mu, s).data()[0];
            assert!((fd - sc).abs() < 1e-8, "x={x}: {fd} vs {sc}");
        }
    }
}
