use alloc::format;
use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::{adam_step, clip_global_norm, AdamConfig, AdamState, ParamStore};
use crate::rng::NoiseStream;
use crate::{Error, Result, Tensor};

use super::{forward_diffuse_with, training_target_with, NoiseSchedule, PredictionTarget};

/// A model that can be fit with the denoising objective.
pub trait TrainableModel {
    fn target(&self) -> PredictionTarget;

    fn params(&self) -> &ParamStore;

    fn params_mut(&mut self) -> &mut ParamStore;

    /// Forward pass that caches what [`TrainableModel::backward`] needs.
    /// `times` holds one normalized time per batch item.
    fn forward_train(&mut self, x_t: &Tensor, times: &[f64], cond: Option<&Tensor>) -> Result<Tensor>;

    /// Accumulates parameter gradients for `grad_out` (same shape as the
    /// forward output) into the model's parameter store.
    fn backward(&mut self, grad_out: &Tensor) -> Result<()>;
}

/// Clean images `[N, C, H, W]` and, for conditioned models, the matching
/// conditioning channels `[N, Cc, H, W]`.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub x0: Tensor,
    pub cond: Option<Tensor>,
}

/// Optimizer state plus the noise stream that draws timesteps and noise.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub schedule: NoiseSchedule,
    pub adam: AdamState,
    pub max_grad_norm: f64,
    pub rng: NoiseStream,
}

impl Trainer {
    pub fn new(schedule: NoiseSchedule, adam: AdamConfig, seed: u64) -> Self {
        Self {
            schedule,
            adam: AdamState::new(adam),
            max_grad_norm: 1.0,
            rng: NoiseStream::new(seed),
        }
    }
}

/// One optimizer step on `batch`; returns the batch loss.
///
/// A non-finite loss or gradient aborts before the parameters are touched.
pub fn train_step<M: TrainableModel + ?Sized>(model: &mut M, batch: &TrainBatch, trainer: &mut Trainer) -> Result<f64> {
    let (n, c, h, w) = batch.x0.dims4()?;
    let item = c * h * w;
    let mut x_t = Vec::with_capacity(n * item);
    let mut targets = Vec::with_capacity(n * item);
    let mut times = Vec::with_capacity(n);
    for i in 0..n {
        let t = 1 + trainer.rng.below(trainer.schedule.len());
        let ab = trainer.schedule.alpha_bar(t)?;
        let x0 = batch.x0.batch_item(i)?;
        let noise = trainer.rng.normal_tensor(x0.shape());
        x_t.extend_from_slice(forward_diffuse_with(&x0, ab, &noise)?.data());
        targets.extend_from_slice(training_target_with(&x0, &noise, ab, model.target())?.data());
        times.push(trainer.schedule.time(t)?);
    }
    let x_t = Tensor::new(&[n, c, h, w], x_t)?;
    let targets = Tensor::new(&[n, c, h, w], targets)?;
    let pred = model.forward_train(&x_t, &times, batch.cond.as_ref())?;
    let diff = pred.sub(&targets)?;
    let loss = diff.sum_sq() / diff.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("training loss {loss}")));
    }
    let grad = diff.scale(2.0 / diff.len() as f64);
    model.params_mut().zero_grads();
    model.backward(&grad)?;
    if !model.params().grad_norm().is_finite() {
        model.params_mut().zero_grads();
        bail!(Numeric, "non-finite gradient");
    }
    clip_global_norm(model.params_mut(), trainer.max_grad_norm);
    adam_step(model.params_mut(), &mut trainer.adam)?;
    Ok(loss)
}

/// Trains over every batch once; returns the mean batch loss.
pub fn train_epoch<M: TrainableModel + ?Sized>(
    model: &mut M,
    batches: &[TrainBatch],
    trainer: &mut Trainer,
) -> Result<f64> {
    if batches.is_empty() {
        bail!(Dataset, "no batches");
    }
    let mut total = 0.0;
    for b in batches {
        total += train_step(model, b, trainer)?;
    }
    Ok(total / batches.len() as f64)
}
