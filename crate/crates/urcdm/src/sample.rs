//! Whole-slide synthesis from nine trained model files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use urcdm_core::cascade::{generate_wsi, plan, Cdm, CdmModel, StageRunner, Urcdm, UrcdmGeometry, WsiOutput};
use urcdm_core::diffusion::NoiseSchedule;
use urcdm_core::synthdata::{Image8, Magnification, ModelSlot, Pyramid};

use crate::config::{write_snapshot, SampleConfig, SNAPSHOT};
use crate::error::{AppError, AppResult, IoContext};
use crate::model_io::{self, ModelFile};
use crate::runner::{format_events, ThreadedRunner};
use crate::store;
use crate::train::checkpoint_path;

/// The nine models with their sampling chains, indexed `[stage][slot]`.
pub struct ModelBank {
    pub models: Vec<ModelFile>,
    pub schedules: Vec<NoiseSchedule>,
}

impl ModelBank {
    pub fn load(dir: &Path, sampling_steps: usize) -> AppResult<Self> {
        let mut models = Vec::with_capacity(9);
        let mut schedules = Vec::with_capacity(9);
        for stage in Magnification::ALL {
            for slot in ModelSlot::ALL {
                let path = checkpoint_path(dir, stage, slot);
                let m = model_io::load(&path)?;
                let full = m.schedule()?;
                let steps = sampling_steps.min(full.len());
                schedules.push(full.respaced(steps)?);
                models.push(m);
            }
        }
        Ok(Self { models, schedules })
    }

    pub fn urcdm(&self, geometry: UrcdmGeometry) -> AppResult<Urcdm<'_>> {
        let cdm = |stage: usize| Cdm {
            models: std::array::from_fn(|slot| {
                let k = stage * 3 + slot;
                CdmModel {
                    denoiser: &self.models[k].net,
                    schedule: &self.schedules[k],
                    resolution: self.models[k].net.config().resolution,
                }
            }),
        };
        Ok(Urcdm::new([cdm(0), cdm(1), cdm(2)], geometry, 3)?)
    }
}

pub fn generated_id(seed: u64) -> String {
    format!("gen-{seed:016x}")
}

pub fn to_pyramid(out: &WsiOutput, id: String, seed: u64) -> AppResult<Pyramid> {
    let levels = out
        .levels
        .iter()
        .map(Image8::from_tensor)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Pyramid { id, seed, levels })
}

/// SHA-256 over the raw bytes of every level, coarsest first.
pub fn pyramid_digest(p: &Pyramid) -> String {
    let mut h = Sha256::new();
    for level in &p.levels {
        h.update((level.width() as u64).to_le_bytes());
        h.update(level.bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn format_plan(geometry: &UrcdmGeometry) -> AppResult<String> {
    let mut s = String::new();
    for p in plan(geometry)? {
        write!(s, "stage={} canvas={} tiles={}", p.stage, p.canvas, p.tiles()).unwrap();
        if let Some(g) = p.grid {
            write!(
                s,
                " grid={}x{} stride={} wavefronts={} max_parallel={}",
                g.per_side, g.per_side, g.stride, p.wavefronts, p.max_parallel
            )
            .unwrap();
        }
        if let Some(f) = p.footprint {
            write!(s, " footprint={f:.4} integer={}", p.integer_footprint()).unwrap();
        }
        s.push('\n');
    }
    if let Some(f) = geometry.final_size {
        writeln!(s, "final_size={f}").unwrap();
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub dir: PathBuf,
    pub digest: String,
    pub white_tiles: usize,
    pub output: WsiOutput,
}

/// Generates one slide and writes it to `out/<id>/` together with the
/// stage event logs, the config snapshot and `digest.txt`.
pub fn sample(cfg: &SampleConfig, out: &Path) -> AppResult<SampleOutcome> {
    let geometry = cfg.validate()?;
    let bank = ModelBank::load(&cfg.checkpoints, cfg.sampling_steps)?;
    let urcdm = bank.urcdm(geometry)?;
    let runner = ThreadedRunner::new(cfg.workers);
    run_and_write(&urcdm, cfg, &runner, out)
}

pub fn run_and_write(
    urcdm: &Urcdm<'_>,
    cfg: &SampleConfig,
    runner: &dyn StageRunner,
    out: &Path,
) -> AppResult<SampleOutcome> {
    let id = generated_id(cfg.seed);
    let wsi = match generate_wsi(urcdm, cfg.seed, runner) {
        Ok(w) => w,
        Err(f) => {
            let dir = out.join(format!("{id}.failed"));
            fs::create_dir_all(&dir).at(&dir)?;
            let path = dir.join(format!("events_stage{}.log", f.stage));
            fs::write(&path, format_events(f.stage, &f.events)).at(&path)?;
            if let Some(partial) = &f.partial {
                store::save_png(&dir.join("partial.png"), &Image8::from_tensor(&partial.to_tensor())?)?;
            }
            write_snapshot(&dir.join(SNAPSHOT), cfg)?;
            return Err(AppError::Core(f.error));
        }
    };
    let pyramid = to_pyramid(&wsi, id, cfg.seed)?;
    let dir = store::write_pyramid(out, &pyramid, store::DEFAULT_TILE)?;
    let mut white_tiles = 0;
    for (k, stage) in wsi.stages.iter().enumerate() {
        let path = dir.join(format!("events_stage{}.log", k + 2));
        fs::write(&path, format_events(k + 2, &stage.events)).at(&path)?;
        white_tiles += stage
            .events
            .iter()
            .filter(|e| e.transition == urcdm_core::tiler::Transition::SkippedWhite)
            .count();
    }
    write_snapshot(&dir.join(SNAPSHOT), cfg)?;
    let digest = pyramid_digest(&pyramid);
    let path = dir.join("digest.txt");
    fs::write(&path, format!("sha256={digest}\n")).at(&path)?;
    Ok(SampleOutcome {
        dir,
        digest,
        white_tiles,
        output: wsi,
    })
}
