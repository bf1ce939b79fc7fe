use urcdm_core::diffusion::{
    Conditioning, Denoiser, NoiseSchedule, PredictionTarget, ScheduleKind, StepInfo, TrainBatch, TrainableModel,
    Trainer,
};
use urcdm_core::numerics::{finite_diff_check, AdamConfig};
use urcdm_core::rng::NoiseStream;
use urcdm_core::scorenet::{ScoreNet, ScoreNetConfig};
use urcdm_core::Tensor;

fn small_net(cond: Conditioning, seed: u64) -> ScoreNet {
    // Two channels per group, so no bias is fully cancelled by normalization.
    let cfg = ScoreNetConfig::new(8, cond, PredictionTarget::Epsilon).with_width(8);
    let mut net = ScoreNet::init(cfg, seed).unwrap();
    // The head starts at zero, which would hide every upstream gradient.
    let (w, b) = net.output_head();
    let mut rng = NoiseStream::new(seed ^ 0xabc);
    for name in [w, b] {
        for v in net.params_mut().get_mut(&name).unwrap().data_mut() {
            *v = 0.3 * rng.normal();
        }
    }
    net
}

fn check_gradients(cond: Conditioning) -> f64 {
    let mut net = small_net(cond, 11);
    let mut rng = NoiseStream::new(5);
    let x = rng.normal_tensor(&[2, 3, 8, 8]);
    let times = [0.3, 0.85];
    let c = (!cond.is_none()).then(|| rng.normal_tensor(&[2, cond.channels(3), 8, 8]));
    let probe = rng.normal_tensor(&[2, 3, 8, 8]);
    net.params_mut().zero_grads();
    TrainableModel::forward_train(&mut net, &x, &times, c.as_ref()).unwrap();
    TrainableModel::backward(&mut net, &probe).unwrap();
    let cfg = net.config().clone();
    let mut params = net.params().clone();
    finite_diff_check(
        &mut params,
        |p| {
            let n = ScoreNet::from_params(cfg.clone(), p.clone())?;
            n.predict(&x, &times, c.as_ref())?.dot(&probe)
        },
        1e-5,
        400,
        3,
    )
    .unwrap()
}

#[test]
fn unconditional_gradients_match_finite_differences() {
    let err = check_gradients(Conditioning::NONE);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn conditioned_gradients_match_finite_differences() {
    let err = check_gradients(Conditioning {
        images: 2,
        inpaint_mask: true,
    });
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn fresh_network_predicts_zero() {
    let cfg = ScoreNetConfig::new(8, Conditioning::NONE, PredictionTarget::V).with_width(4);
    let net = ScoreNet::init(cfg, 1).unwrap();
    let x = NoiseStream::new(2).normal_tensor(&[1, 3, 8, 8]);
    let y = net.predict(&x, &[0.5], None).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn batch_items_are_independent() {
    let net = small_net(Conditioning::NONE, 4);
    let mut rng = NoiseStream::new(9);
    let a = rng.normal_tensor(&[1, 3, 8, 8]);
    let b = rng.normal_tensor(&[1, 3, 8, 8]);
    let both = Tensor::stack(&[a.batch_item(0).unwrap(), b.batch_item(0).unwrap()]).unwrap();
    let ya = net.predict(&a, &[0.2], None).unwrap();
    let yab = net.predict(&both, &[0.2, 0.7], None).unwrap();
    assert!(ya.batch_item(0).unwrap().max_abs_diff(&yab.batch_item(0).unwrap()).unwrap() < 1e-12);
}

#[test]
fn conditioning_mismatch_is_rejected() {
    let cond = Conditioning {
        images: 1,
        inpaint_mask: false,
    };
    let net = small_net(cond, 1);
    let x = Tensor::zeros(&[1, 3, 8, 8]);
    assert!(net.predict(&x, &[0.5], None).is_err());
    let plain = small_net(Conditioning::NONE, 1);
    assert!(plain.predict(&x, &[0.5], Some(&Tensor::zeros(&[1, 3, 8, 8]))).is_err());
    let steps = [StepInfo {
        time: 0.5,
        alpha_bar: 0.5,
    }];
    assert!(Denoiser::predict(&plain, &x, &steps, None).is_ok());
}

#[test]
fn training_reduces_loss_on_constant_images() {
    let cfg = ScoreNetConfig::new(8, Conditioning::NONE, PredictionTarget::Epsilon).with_width(8);
    let mut net = ScoreNet::init(cfg, 3).unwrap();
    let schedule = NoiseSchedule::new(ScheduleKind::Cosine, 100).unwrap();
    let adam = AdamConfig {
        lr: 2e-3,
        ..AdamConfig::default()
    };
    let mut trainer = Trainer::new(schedule, adam, 8);
    let batch = TrainBatch {
        x0: Tensor::full(&[8, 3, 8, 8], 0.4),
        cond: None,
    };
    let mut losses = Vec::new();
    for _ in 0..150 {
        losses.push(urcdm_core::diffusion::train_step(&mut net, &batch, &mut trainer).unwrap());
    }
    let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = losses[130..].iter().sum::<f64>() / 20.0;
    assert!(tail < 0.7 * head, "loss {head} -> {tail}");
}

