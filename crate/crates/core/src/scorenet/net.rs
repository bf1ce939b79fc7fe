use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diffusion::{c_noise_embedding, Conditioning, Denoiser, PredictionTarget, StepInfo, TrainableModel};
use crate::error::bail;
use crate::numerics::layers::{
    add_channel_bias, channel_bias_grad, concat_channels, split_channels, Conv2d, Dense, GroupNorm, Layer, Resize,
    ResizeMode, Silu,
};
use crate::numerics::ParamStore;
use crate::rng::NoiseStream;
use crate::{Result, Tensor};

use super::ScoreNetConfig;

fn run<L: Layer>(layer: &mut L, params: &ParamStore, x: &Tensor, train: bool) -> Result<Tensor> {
    if train {
        layer.forward_train(params, x)
    } else {
        layer.forward(params, x)
    }
}

/// `x + conv(silu(norm(x) + time_bias))`
#[derive(Debug, Clone)]
struct ResBlock {
    time: Dense,
    norm: GroupNorm,
    act: Silu,
    conv: Conv2d,
}

impl ResBlock {
    fn new(name: &str, width: usize, groups: usize, time_width: usize) -> Self {
        Self {
            time: Dense::new(format!("{name}.time"), time_width, width),
            norm: GroupNorm::new(format!("{name}.norm"), groups, width),
            act: Silu::new(),
            conv: Conv2d::new(format!("{name}.conv"), width, width, 3),
        }
    }

    fn init(&self, params: &mut ParamStore, rng: &mut NoiseStream) {
        self.time.init(params, rng);
        self.norm.init(params);
        self.conv.init(params, rng);
    }

    fn run(&mut self, params: &ParamStore, x: &Tensor, time_hidden: &Tensor, train: bool) -> Result<Tensor> {
        let bias = run(&mut self.time, params, time_hidden, train)?;
        let h = run(&mut self.norm, params, x, train)?;
        let h = add_channel_bias(&h, &bias)?;
        let h = run(&mut self.act, params, &h, train)?;
        let h = run(&mut self.conv, params, &h, train)?;
        x.add(&h)
    }

    /// Returns gradients with respect to the block input and the time hidden state.
    fn backward(&mut self, params: &mut ParamStore, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
        let g = self.conv.backward(params, grad_out)?;
        let g = self.act.backward(params, &g)?;
        let dt = self.time.backward(params, &channel_bias_grad(&g)?)?;
        let g = self.norm.backward(params, &g)?;
        Ok((grad_out.add(&g)?, dt))
    }
}

#[derive(Debug, Clone)]
struct Layers {
    time_in: Dense,
    time_act: Silu,
    input: Conv2d,
    enc: Vec<ResBlock>,
    down: Vec<(Resize, Conv2d)>,
    mid: ResBlock,
    up: Vec<(Resize, Conv2d)>,
    dec: Vec<ResBlock>,
    out_norm: GroupNorm,
    out_act: Silu,
    out_conv: Conv2d,
}

/// The denoiser network together with its parameters.
#[derive(Debug, Clone)]
pub struct ScoreNet {
    config: ScoreNetConfig,
    params: ParamStore,
    layers: Layers,
}

impl ScoreNet {
    fn build_layers(cfg: &ScoreNetConfig) -> Layers {
        let tw = 2 * cfg.base_width;
        let levels = cfg.levels;
        let in_ch = cfg.channels + cfg.cond_channels();
        let res = |l: usize| cfg.resolution >> l;
        Layers {
            time_in: Dense::new("time.in", cfg.embed_dim, tw),
            time_act: Silu::new(),
            input: Conv2d::new("input", in_ch, cfg.width(0), 3),
            enc: (0..levels)
                .map(|l| ResBlock::new(&format!("enc{l}"), cfg.width(l), cfg.groups, tw))
                .collect(),
            down: (0..levels - 1)
                .map(|l| {
                    (
                        Resize::new(res(l + 1), res(l + 1), ResizeMode::Bilinear),
                        Conv2d::new(format!("down{l}"), cfg.width(l), cfg.width(l + 1), 3),
                    )
                })
                .collect(),
            mid: ResBlock::new("mid", cfg.width(levels - 1), cfg.groups, tw),
            up: (0..levels - 1)
                .map(|l| {
                    (
                        Resize::new(res(l), res(l), ResizeMode::Nearest),
                        Conv2d::new(format!("up{l}"), cfg.width(l + 1) + cfg.width(l), cfg.width(l), 3),
                    )
                })
                .collect(),
            dec: (0..levels - 1)
                .map(|l| ResBlock::new(&format!("dec{l}"), cfg.width(l), cfg.groups, tw))
                .collect(),
            out_norm: GroupNorm::new("out.norm", cfg.groups, cfg.width(0)),
            out_act: Silu::new(),
            out_conv: Conv2d::new("out.conv", cfg.width(0), cfg.channels, 3),
        }
    }

    /// Deterministic fan-in scaled initialization; the output convolution is
    /// zeroed so an untrained network predicts exactly 0.
    pub fn init(config: ScoreNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layers = Self::build_layers(&config);
        let mut params = ParamStore::new();
        let mut rng = NoiseStream::new(seed);
        layers.time_in.init(&mut params, &mut rng);
        layers.input.init(&mut params, &mut rng);
        for b in &layers.enc {
            b.init(&mut params, &mut rng);
        }
        for (_, c) in &layers.down {
            c.init(&mut params, &mut rng);
        }
        layers.mid.init(&mut params, &mut rng);
        for (_, c) in &layers.up {
            c.init(&mut params, &mut rng);
        }
        for b in &layers.dec {
            b.init(&mut params, &mut rng);
        }
        layers.out_norm.init(&mut params);
        layers.out_conv.init_zero(&mut params);
        Ok(Self { config, params, layers })
    }

    /// Rebuilds a network around previously trained parameters.
    pub fn from_params(config: ScoreNetConfig, params: ParamStore) -> Result<Self> {
        let reference = Self::init(config.clone(), 0)?;
        for (name, v, _) in reference.params.iter() {
            let got = params.get(name)?;
            if got.shape() != v.shape() {
                bail!(Format, "parameter {name}: shape {:?}, expected {:?}", got.shape(), v.shape());
            }
        }
        if params.len() != reference.params.len() {
            bail!(Format, "{} parameters, expected {}", params.len(), reference.params.len());
        }
        Ok(Self {
            layers: reference.layers,
            config,
            params,
        })
    }

    pub fn config(&self) -> &ScoreNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn output_head(&self) -> (String, String) {
        (self.layers.out_conv.weight_name(), self.layers.out_conv.bias_name())
    }

    fn check_inputs(&self, x_t: &Tensor, times: &[f64], cond: Option<&Tensor>) -> Result<()> {
        let cfg = &self.config;
        let (n, c, h, w) = x_t.dims4()?;
        if c != cfg.channels || h != cfg.resolution || w != cfg.resolution {
            bail!(InvalidShape, "input {:?} for a {}px {}-channel model", x_t.shape(), cfg.resolution, cfg.channels);
        }
        if times.len() != n {
            bail!(InvalidShape, "{} times for batch of {n}", times.len());
        }
        match (cond, cfg.conditioning.is_none()) {
            (Some(_), true) => bail!(Config, "conditioning supplied to an unconditional model"),
            (None, false) => bail!(Config, "conditioned model called without conditioning"),
            (Some(cd), false) => {
                let expect = [n, cfg.cond_channels(), h, w];
                if cd.shape() != expect {
                    bail!(InvalidShape, "conditioning {:?}, expected {expect:?}", cd.shape());
                }
            }
            (None, true) => {}
        }
        Ok(())
    }

    fn embed(&self, times: &[f64]) -> Result<Tensor> {
        let e = self.config.embed_dim;
        let mut data = Vec::with_capacity(times.len() * e);
        for &t in times {
            data.extend(c_noise_embedding(t, e));
        }
        Tensor::new(&[times.len(), e], data)
    }

    fn run_forward(
        layers: &mut Layers,
        params: &ParamStore,
        cfg: &ScoreNetConfig,
        emb: &Tensor,
        x_t: &Tensor,
        cond: Option<&Tensor>,
        train: bool,
    ) -> Result<Tensor> {
        let th = run(&mut layers.time_in, params, emb, train)?;
        let th = run(&mut layers.time_act, params, &th, train)?;
        let mut h = match cond {
            Some(cd) => run(&mut layers.input, params, &concat_channels(&[x_t, cd])?, train)?,
            None => run(&mut layers.input, params, x_t, train)?,
        };
        let mut skips = Vec::with_capacity(cfg.levels);
        for l in 0..cfg.levels {
            h = layers.enc[l].run(params, &h, &th, train)?;
            if l + 1 < cfg.levels {
                skips.push(h.clone());
                let (resize, conv) = &mut layers.down[l];
                h = run(resize, params, &h, train)?;
                h = run(conv, params, &h, train)?;
            }
        }
        h = layers.mid.run(params, &h, &th, train)?;
        for l in (0..cfg.levels - 1).rev() {
            let (resize, conv) = &mut layers.up[l];
            h = run(resize, params, &h, train)?;
            h = concat_channels(&[&h, &skips[l]])?;
            h = run(conv, params, &h, train)?;
            h = layers.dec[l].run(params, &h, &th, train)?;
        }
        let h = run(&mut layers.out_norm, params, &h, train)?;
        let h = run(&mut layers.out_act, params, &h, train)?;
        run(&mut layers.out_conv, params, &h, train)
    }

    /// Network output for a batch; pure and safe to call concurrently.
    pub fn predict(&self, x_t: &Tensor, times: &[f64], cond: Option<&Tensor>) -> Result<Tensor> {
        self.check_inputs(x_t, times, cond)?;
        let emb = self.embed(times)?;
        let mut layers = self.layers.clone();
        Self::run_forward(&mut layers, &self.params, &self.config, &emb, x_t, cond, false)
    }
}

impl Denoiser for ScoreNet {
    fn target(&self) -> PredictionTarget {
        self.config.target
    }

    fn conditioning(&self) -> Conditioning {
        self.config.conditioning
    }

    fn predict(&self, x_t: &Tensor, steps: &[StepInfo], cond: Option<&Tensor>) -> Result<Tensor> {
        let times: Vec<f64> = steps.iter().map(|s| s.time).collect();
        ScoreNet::predict(self, x_t, &times, cond)
    }
}

impl TrainableModel for ScoreNet {
    fn target(&self) -> PredictionTarget {
        self.config.target
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward_train(&mut self, x_t: &Tensor, times: &[f64], cond: Option<&Tensor>) -> Result<Tensor> {
        self.check_inputs(x_t, times, cond)?;
        let emb = self.embed(times)?;
        Self::run_forward(&mut self.layers, &self.params, &self.config, &emb, x_t, cond, true)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<()> {
        let levels = self.config.levels;
        let l = &mut self.layers;
        let p = &mut self.params;
        let g = l.out_conv.backward(p, grad_out)?;
        let g = l.out_act.backward(p, &g)?;
        let mut g = l.out_norm.backward(p, &g)?;
        let mut d_time: Option<Tensor> = None;
        let mut add_time = |d: Tensor| -> Result<()> {
            match &mut d_time {
                Some(acc) => acc.axpy(1.0, &d),
                None => {
                    d_time = Some(d);
                    Ok(())
                }
            }
        };
        let mut d_skips: Vec<Option<Tensor>> = (0..levels).map(|_| None).collect();
        for lv in 0..levels - 1 {
            let (dg, dt) = l.dec[lv].backward(p, &g)?;
            add_time(dt)?;
            let (resize, conv) = &mut l.up[lv];
            let dcat = conv.backward(p, &dg)?;
            let up_width = self.config.width(lv + 1);
            let mut parts = split_channels(&dcat, &[up_width, self.config.width(lv)])?;
            let d_skip = parts.pop().expect("two parts");
            let d_up = parts.pop().expect("two parts");
            d_skips[lv] = Some(d_skip);
            g = resize.backward(p, &d_up)?;
        }
        let (dg, dt) = l.mid.backward(p, &g)?;
        add_time(dt)?;
        g = dg;
        for lv in (0..levels).rev() {
            if lv + 1 < levels {
                let (resize, conv) = &mut l.down[lv];
                g = conv.backward(p, &g)?;
                g = resize.backward(p, &g)?;
                if let Some(ds) = d_skips[lv].take() {
                    g.axpy(1.0, &ds)?;
                }
            }
            let (dg, dt) = l.enc[lv].backward(p, &g)?;
            add_time(dt)?;
            g = dg;
        }
        l.input.backward(p, &g)?;
        let Some(dt) = d_time else {
            bail!(State, "no time gradient collected");
        };
        let dt = l.time_act.backward(p, &dt)?;
        l.time_in.backward(p, &dt)?;
        Ok(())
    }
}
