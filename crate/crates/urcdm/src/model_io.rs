//! Model files: the parameter store plus `meta.*` scalar entries recording
//! the network configuration and the training schedule.

use std::fs;
use std::path::Path;

use urcdm_core::diffusion::{Conditioning, NoiseSchedule, PredictionTarget, ScheduleKind};
use urcdm_core::numerics::{checkpoint, ParamStore};
use urcdm_core::scorenet::{ScoreNet, ScoreNetConfig};
use urcdm_core::Tensor;

use crate::error::{AppError, AppResult, IoContext};

pub const EXTENSION: &str = "urck";

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub net: ScoreNet,
    pub schedule_kind: ScheduleKind,
    pub schedule_steps: usize,
    /// Optimizer steps taken when the file was written.
    pub steps_done: u64,
    pub seed: u64,
}

impl ModelFile {
    pub fn schedule(&self) -> AppResult<NoiseSchedule> {
        Ok(NoiseSchedule::new(self.schedule_kind, self.schedule_steps)?)
    }
}

fn target_code(t: PredictionTarget) -> f64 {
    match t {
        PredictionTarget::Epsilon => 0.0,
        PredictionTarget::V => 1.0,
    }
}

pub fn encode(model: &ModelFile) -> Vec<u8> {
    let c = model.net.config();
    let meta = [
        ("resolution", c.resolution as f64),
        ("channels", c.channels as f64),
        ("base_width", c.base_width as f64),
        ("levels", c.levels as f64),
        ("groups", c.groups as f64),
        ("embed_dim", c.embed_dim as f64),
        ("cond_images", c.conditioning.images as f64),
        ("inpaint_mask", if c.conditioning.inpaint_mask { 1.0 } else { 0.0 }),
        ("target", target_code(c.target)),
        ("schedule_kind", model.schedule_kind.code() as f64),
        ("schedule_steps", model.schedule_steps as f64),
        ("steps_done", model.steps_done as f64),
        // Seeds can exceed 2^53, so they are split into two exact halves.
        ("seed_hi", (model.seed >> 32) as f64),
        ("seed_lo", (model.seed & 0xffff_ffff) as f64),
    ];
    let mut entries: Vec<(String, Tensor)> = meta
        .iter()
        .map(|(k, v)| (format!("meta.{k}"), Tensor::full(&[1], *v)))
        .collect();
    entries.extend(model.net.params().values());
    checkpoint::encode(&entries)
}

pub fn decode(bytes: &[u8]) -> AppResult<ModelFile> {
    let entries = checkpoint::decode(bytes)?;
    let mut meta = std::collections::BTreeMap::new();
    let mut params = Vec::new();
    for (name, t) in entries {
        match name.strip_prefix("meta.") {
            Some(key) => {
                let v = t.data().first().copied().unwrap_or(f64::NAN);
                meta.insert(key.to_string(), v);
            }
            None => params.push((name, t)),
        }
    }
    let get = |key: &str| -> AppResult<u64> {
        let v = *meta
            .get(key)
            .ok_or_else(|| AppError::validation(format!("checkpoint field `{key}`"), "missing"))?;
        if !(v >= 0.0 && v.fract() == 0.0 && v < 9.0e15) {
            return Err(AppError::validation(format!("checkpoint field `{key}`"), format!("{v} is not a count")));
        }
        Ok(v as u64)
    };
    let target = match get("target")? {
        0 => PredictionTarget::Epsilon,
        1 => PredictionTarget::V,
        other => return Err(AppError::validation("checkpoint field `target`", format!("unknown code {other}"))),
    };
    let config = ScoreNetConfig {
        resolution: get("resolution")? as usize,
        channels: get("channels")? as usize,
        base_width: get("base_width")? as usize,
        levels: get("levels")? as usize,
        groups: get("groups")? as usize,
        embed_dim: get("embed_dim")? as usize,
        conditioning: Conditioning {
            images: get("cond_images")? as usize,
            inpaint_mask: get("inpaint_mask")? == 1,
        },
        target,
    };
    let net = ScoreNet::from_params(config, ParamStore::from_values(params))?;
    Ok(ModelFile {
        net,
        schedule_kind: ScheduleKind::from_code(get("schedule_kind")? as u32)?,
        schedule_steps: get("schedule_steps")? as usize,
        steps_done: get("steps_done")?,
        seed: (get("seed_hi")? << 32) | get("seed_lo")?,
    })
}

pub fn save(path: &Path, model: &ModelFile) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, encode(model)).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

pub fn load(path: &Path) -> AppResult<ModelFile> {
    let bytes = fs::read(path).at(path)?;
    decode(&bytes).map_err(|e| match e {
        AppError::Core(inner) => AppError::validation(format!("checkpoint {}", path.display()), inner.to_string()),
        other => other,
    })
}
