use crate::numerics::math;
use crate::rng::NoiseStream;
use crate::{Error, Result, Tensor};

use super::{NoiseSchedule, PredictionTarget};

/// `x_t = √ᾱ·x0 + √(1−ᾱ)·noise` for an explicit `ᾱ`.
pub fn forward_diffuse_with(x0: &Tensor, alpha_bar: f64, noise: &Tensor) -> Result<Tensor> {
    let a = math::sqrt(alpha_bar);
    let s = math::sqrt(1.0 - alpha_bar);
    x0.zip_map(noise, |x, e| a * x + s * e)
}

pub fn forward_diffuse(schedule: &NoiseSchedule, x0: &Tensor, t: usize, noise: &Tensor) -> Result<Tensor> {
    forward_diffuse_with(x0, schedule.alpha_bar(t)?, noise)
}

pub fn training_target_with(
    x0: &Tensor,
    noise: &Tensor,
    alpha_bar: f64,
    target: PredictionTarget,
) -> Result<Tensor> {
    x0.same_shape(noise)?;
    Ok(match target {
        PredictionTarget::Epsilon => noise.clone(),
        PredictionTarget::V => {
            let a = math::sqrt(alpha_bar);
            let s = math::sqrt(1.0 - alpha_bar);
            noise.zip_map(x0, |e, x| a * e - s * x)?
        }
    })
}

pub fn training_target(
    schedule: &NoiseSchedule,
    x0: &Tensor,
    noise: &Tensor,
    t: usize,
    target: PredictionTarget,
) -> Result<Tensor> {
    training_target_with(x0, noise, schedule.alpha_bar(t)?, target)
}

pub fn predict_x0_with(
    x_t: &Tensor,
    prediction: &Tensor,
    alpha_bar: f64,
    target: PredictionTarget,
) -> Result<Tensor> {
    let a = math::sqrt(alpha_bar);
    let s = math::sqrt(1.0 - alpha_bar);
    match target {
        PredictionTarget::Epsilon => {
            if alpha_bar < 1e-8 {
                return Err(Error::Conditioning(alloc::format!(
                    "ᾱ = {alpha_bar:e} too small to invert an ε prediction"
                )));
            }
            x_t.zip_map(prediction, |x, e| (x - s * e) / a)
        }
        PredictionTarget::V => x_t.zip_map(prediction, |x, v| a * x - s * v),
    }
}

pub fn predict_x0(
    schedule: &NoiseSchedule,
    x_t: &Tensor,
    prediction: &Tensor,
    t: usize,
    target: PredictionTarget,
) -> Result<Tensor> {
    predict_x0_with(x_t, prediction, schedule.alpha_bar(t)?, target)
}

/// Converts a network output into the noise estimate `ε̂`.
pub fn eps_from_prediction(
    x_t: &Tensor,
    prediction: &Tensor,
    alpha_bar: f64,
    target: PredictionTarget,
) -> Result<Tensor> {
    match target {
        PredictionTarget::Epsilon => {
            x_t.same_shape(prediction)?;
            Ok(prediction.clone())
        }
        PredictionTarget::V => {
            let a = math::sqrt(alpha_bar);
            let s = math::sqrt(1.0 - alpha_bar);
            prediction.zip_map(x_t, |v, x| a * v + s * x)
        }
    }
}

/// Expresses a noise estimate in the requested parameterization.
pub fn prediction_from_eps(x_t: &Tensor, eps: &Tensor, alpha_bar: f64, target: PredictionTarget) -> Result<Tensor> {
    match target {
        PredictionTarget::Epsilon => {
            x_t.same_shape(eps)?;
            Ok(eps.clone())
        }
        PredictionTarget::V => {
            let a = math::sqrt(alpha_bar);
            let s = math::sqrt(1.0 - alpha_bar);
            // v = √ᾱ·ε − σ·x̂0 with x̂0 = (x_t − σ·ε)/√ᾱ  =>  v = (ε − σ·x_t)/√ᾱ
            eps.zip_map(x_t, |e, x| (e - s * x) / a)
        }
    }
}

/// Rewrites a network output so the clean sample it implies lies in
/// `[−limit, limit]`; outputs already implying an in-range `x̂0` come back
/// unchanged up to round-off.
pub fn clip_prediction(
    x_t: &Tensor,
    prediction: &Tensor,
    alpha_bar: f64,
    target: PredictionTarget,
    limit: f64,
) -> Result<Tensor> {
    let a = math::sqrt(alpha_bar);
    let s = math::sqrt(1.0 - alpha_bar);
    if a == 0.0 || s == 0.0 {
        return Err(Error::Conditioning(alloc::format!("ᾱ = {alpha_bar:e} leaves no clean/noise split")));
    }
    let eps = eps_from_prediction(x_t, prediction, alpha_bar, target)?;
    let eps = x_t.zip_map(&eps, |x, e| {
        let x0 = ((x - s * e) / a).clamp(-limit, limit);
        (x - a * x0) / s
    })?;
    prediction_from_eps(x_t, &eps, alpha_bar, target)
}

/// One ancestral step `x_t → x_{t−1}`.
///
/// Fresh noise is drawn from `noise` only for `t > 1`.
pub fn reverse_step(
    schedule: &NoiseSchedule,
    x_t: &Tensor,
    prediction: &Tensor,
    t: usize,
    target: PredictionTarget,
    noise: &mut NoiseStream,
) -> Result<Tensor> {
    let ab = schedule.alpha_bar(t)?;
    let beta = schedule.beta(t)?;
    let eps = eps_from_prediction(x_t, prediction, ab, target)?;
    let coef = beta / math::sqrt(1.0 - ab);
    let inv_sqrt_alpha = 1.0 / math::sqrt(1.0 - beta);
    let mut out = x_t.zip_map(&eps, |x, e| inv_sqrt_alpha * (x - coef * e))?;
    if t > 1 {
        let std = math::sqrt(schedule.posterior_variance(t)?);
        for v in out.data_mut() {
            *v += std * noise.normal();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;
    use alloc::vec;

    #[test]
    fn alpha_bar_one_is_identity() {
        let x0 = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.0);
        let noise = Tensor::full(&[2, 3], 0.7);
        assert_eq!(forward_diffuse_with(&x0, 1.0, &noise).unwrap(), x0);
    }

    #[test]
    fn zero_signal_is_scaled_noise() {
        let s = NoiseSchedule::new(ScheduleKind::Cosine, 50).unwrap();
        let noise = NoiseStream::new(1).normal_tensor(&[4, 4]);
        let x = forward_diffuse(&s, &Tensor::zeros(&[4, 4]), 20, &noise).unwrap();
        let sig = s.sigma(20).unwrap();
        for (a, b) in x.data().iter().zip(noise.data()) {
            assert_eq!(*a, sig * b);
        }
    }

    #[test]
    fn out_of_range_step_errors() {
        let s = NoiseSchedule::new(ScheduleKind::Cosine, 50).unwrap();
        let z = Tensor::zeros(&[2]);
        assert!(matches!(forward_diffuse(&s, &z, 0, &z), Err(Error::Range { .. })));
        assert!(matches!(forward_diffuse(&s, &z, 51, &z), Err(Error::Range { .. })));
    }

    #[test]
    fn v_target_limits_and_scalar_case() {
        let x0 = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let e = Tensor::new(&[3], vec![0.3, 0.1, -1.0]).unwrap();
        let v1 = training_target_with(&x0, &e, 1.0, PredictionTarget::V).unwrap();
        assert_eq!(v1, e);
        let v0 = training_target_with(&x0, &e, 0.0, PredictionTarget::V).unwrap();
        assert_eq!(v0, x0.scale(-1.0));
        let v = training_target_with(&x0, &e, 0.36, PredictionTarget::V).unwrap();
        for i in 0..3 {
            let expect = 0.6 * e.data()[i] - 0.8 * x0.data()[i];
            assert!((v.data()[i] - expect).abs() < 1e-15);
        }
        let eps = training_target_with(&x0, &e, 0.36, PredictionTarget::Epsilon).unwrap();
        assert_eq!(eps, e);
    }

    #[test]
    fn zero_eps_prediction_rescales() {
        let x = Tensor::new(&[2], vec![0.5, -1.0]).unwrap();
        let x0 = predict_x0_with(&x, &Tensor::zeros(&[2]), 0.25, PredictionTarget::Epsilon).unwrap();
        assert_eq!(x0.data(), &[1.0, -2.0]);
    }

    #[test]
    fn tiny_alpha_bar_epsilon_is_ill_conditioned() {
        let x = Tensor::zeros(&[1]);
        let r = predict_x0_with(&x, &x, 1e-9, PredictionTarget::Epsilon);
        assert!(matches!(r, Err(Error::Conditioning(_))));
        assert!(predict_x0_with(&x, &x, 1e-9, PredictionTarget::V).is_ok());
    }

    #[test]
    fn last_step_is_deterministic() {
        let s = NoiseSchedule::new(ScheduleKind::Cosine, 50).unwrap();
        let x = NoiseStream::new(5).normal_tensor(&[8]);
        let p = NoiseStream::new(6).normal_tensor(&[8]);
        let a = reverse_step(&s, &x, &p, 1, PredictionTarget::Epsilon, &mut NoiseStream::new(1)).unwrap();
        let b = reverse_step(&s, &x, &p, 1, PredictionTarget::Epsilon, &mut NoiseStream::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eps_and_prediction_conversions_invert() {
        let x = NoiseStream::new(7).normal_tensor(&[6]);
        let e = NoiseStream::new(8).normal_tensor(&[6]);
        for target in [PredictionTarget::Epsilon, PredictionTarget::V] {
            let p = prediction_from_eps(&x, &e, 0.42, target).unwrap();
            let back = eps_from_prediction(&x, &p, 0.42, target).unwrap();
            assert!(back.max_abs_diff(&e).unwrap() < 1e-12);
        }
    }
}
