//! Training loop for one model of the nine: batches from the corpus, Adam
//! steps, a loss log and periodic checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use urcdm_core::diffusion::{train_step, NoiseSchedule, Trainer};
use urcdm_core::numerics::AdamConfig;
use urcdm_core::rng::{stable_hash, NoiseStream};
use urcdm_core::scorenet::ScoreNet;
use urcdm_core::synthdata::{extract_training_set, Magnification, ModelSlot, Pyramid};
use urcdm_core::Error;

use crate::config::{write_snapshot, TrainConfig};
use crate::error::{AppError, AppResult, IoContext};
use crate::model_io::{self, ModelFile};

/// `<stage>-<slot>`, e.g. `mid-sr1`.
pub fn model_name(stage: Magnification, slot: ModelSlot) -> String {
    format!("{}-{}", stage.name(), slot.name())
}

pub fn checkpoint_path(dir: &Path, stage: Magnification, slot: ModelSlot) -> PathBuf {
    dir.join(format!("{}.{}", model_name(stage, slot), model_io::EXTENSION))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
    pub smoothed: f64,
}

impl LossRecord {
    pub fn line(&self) -> String {
        format!("step={} loss={:.6} smoothed={:.6}", self.step, self.loss, self.smoothed)
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut step = None;
        let mut loss = None;
        let mut smoothed = None;
        for part in line.split_whitespace() {
            let (k, v) = part.split_once('=')?;
            match k {
                "step" => step = v.parse().ok(),
                "loss" => loss = v.parse().ok(),
                "smoothed" => smoothed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self {
            step: step?,
            loss: loss?,
            smoothed: smoothed?,
        })
    }
}

pub fn read_loss_log(path: &Path) -> AppResult<Vec<LossRecord>> {
    let text = fs::read_to_string(path).at(path)?;
    Ok(text.lines().filter_map(LossRecord::parse).collect())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub records: Vec<LossRecord>,
}

/// Trains the model selected by `cfg` and writes `<name>.urck`,
/// `<name>.loss.log` and `<name>.config.toml` into `out`.
///
/// A numeric failure leaves the most recent checkpoint in place.
pub fn train(cfg: &TrainConfig, pyramids: &[Pyramid], out: &Path) -> AppResult<TrainOutcome> {
    cfg.validate()?;
    let stage = cfg.magnification()?;
    let slot = cfg.model_slot()?;
    let net_cfg = cfg.net_config()?;
    let set = extract_training_set(pyramids, stage, &cfg.extract_params())?;
    let name = model_name(stage, slot);
    fs::create_dir_all(out).at(out)?;
    write_snapshot(&out.join(format!("{name}.config.toml")), cfg)?;

    let schedule = NoiseSchedule::new(cfg.schedule.kind(), cfg.schedule_steps)?;
    let mut trainer = Trainer::new(
        schedule,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        stable_hash(&[cfg.seed, 0x7472_6169_6e]),
    );
    trainer.max_grad_norm = cfg.max_grad_norm;
    let mut model = ModelFile {
        net: ScoreNet::init(net_cfg, cfg.seed)?,
        schedule_kind: cfg.schedule.kind(),
        schedule_steps: cfg.schedule_steps,
        steps_done: 0,
        seed: cfg.seed,
    };
    let checkpoint = checkpoint_path(out, stage, slot);
    let loss_log = out.join(format!("{name}.loss.log"));
    model_io::save(&checkpoint, &model)?;
    let mut log = BufWriter::new(File::create(&loss_log).at(&loss_log)?);
    let mut batches = NoiseStream::new(stable_hash(&[cfg.seed, 0x6261_7463_68]));
    let mut records = Vec::new();
    let mut smoothed: Option<f64> = None;
    log::info!(
        "training {name}: {} crops, {} parameters, {} steps",
        set.len(),
        model.net.params().num_values(),
        cfg.steps
    );
    for step in 1..=cfg.steps {
        let batch = set.batch(slot, cfg.batch, &mut batches)?;
        let loss = match train_step(&mut model.net, &batch, &mut trainer) {
            Ok(l) => l,
            Err(Error::Numeric(m)) => {
                log.flush().at(&loss_log)?;
                return Err(AppError::Numeric(format!(
                    "{name} step {step}: {m}; last checkpoint at step {} kept",
                    model.steps_done
                )));
            }
            Err(e) => return Err(e.into()),
        };
        let s = match smoothed {
            None => loss,
            Some(prev) => cfg.smoothing * prev + (1.0 - cfg.smoothing) * loss,
        };
        smoothed = Some(s);
        let record = LossRecord {
            step,
            loss,
            smoothed: s,
        };
        if step % cfg.log_every == 0 || step == cfg.steps {
            writeln!(log, "{}", record.line()).at(&loss_log)?;
            log.flush().at(&loss_log)?;
            log::debug!("{name} {}", record.line());
            records.push(record);
        }
        if step % cfg.checkpoint_every == 0 || step == cfg.steps {
            model.steps_done = step;
            model_io::save(&checkpoint, &model)?;
        }
    }
    log.flush().at(&loss_log)?;
    Ok(TrainOutcome {
        checkpoint,
        loss_log,
        records,
    })
}
