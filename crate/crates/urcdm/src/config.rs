//! Strict TOML run configurations. Unknown keys are rejected, everything is
//! validated before work starts, and a resolved snapshot is written next to
//! each output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use urcdm_core::cascade::{expected_conditioning, ContextAlignment, UrcdmGeometry};
use urcdm_core::diffusion::{PredictionTarget, ScheduleKind};
use urcdm_core::metrics::ALLOWED_SCALES;
use urcdm_core::scorenet::ScoreNetConfig;
use urcdm_core::synthdata::{ExtractParams, GeneratorParams, Magnification, ModelSlot};
use urcdm_core::tiler::WhiteRule;

use crate::error::{AppError, AppResult, IoContext};

pub const OUTPUT_ROOT_ENV: &str = "URCDM_OUTPUT_ROOT";
pub const SNAPSHOT: &str = "config.snapshot.toml";

/// Relative output paths are placed under `$URCDM_OUTPUT_ROOT` when set.
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> AppResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).at(path)?;
    parse(&text).map_err(|e| match e {
        AppError::Validation { message, .. } => AppError::validation(format!("config {}", path.display()), message),
        other => other,
    })
}

pub fn parse<T: DeserializeOwned>(text: &str) -> AppResult<T> {
    toml::from_str(text).map_err(|e| AppError::validation("config", e.message().to_string()))
}

pub fn to_toml<T: Serialize>(config: &T) -> AppResult<String> {
    toml::to_string_pretty(config).map_err(|e| AppError::validation("config snapshot", e.to_string()))
}

/// Writes the resolved configuration to `path` (usually `<dir>/config.snapshot.toml`).
pub fn write_snapshot<T: Serialize>(path: &Path, config: &T) -> AppResult<()> {
    let text = to_toml(config)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    fs::write(path, text).at(path)
}

fn check(ok: bool, what: &str, message: impl Into<String>) -> AppResult<()> {
    if ok {
        Ok(())
    } else {
        Err(AppError::validation(what, message))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub count: usize,
    pub first_seed: u64,
    pub sizes: [usize; 3],
    pub background: [f64; 2],
    pub nucleus_cell: f64,
    pub tile_size: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let g = GeneratorParams::default();
        Self {
            count: 25,
            first_seed: 0,
            sizes: g.sizes,
            background: [g.background.0, g.background.1],
            nucleus_cell: g.nucleus_cell,
            tile_size: crate::store::DEFAULT_TILE,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> AppResult<()> {
        check(self.count > 0, "dataset.count", "must be positive")?;
        let [a, b, c] = self.sizes;
        check(a > 0 && a <= b && b <= c, "dataset.sizes", "must be positive and non-decreasing")?;
        let [lo, hi] = self.background;
        check((0.0..1.0).contains(&lo) && lo <= hi && hi < 1.0, "dataset.background", "need 0 <= lo <= hi < 1")?;
        check(self.nucleus_cell >= 2.0, "dataset.nucleus_cell", "must be at least 2 pixels")?;
        check(self.tile_size > 0, "dataset.tile_size", "must be positive")
    }

    pub fn generator(&self) -> GeneratorParams {
        GeneratorParams {
            sizes: self.sizes,
            background: (self.background[0], self.background[1]),
            nucleus_cell: self.nucleus_cell,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetChoice {
    /// Epsilon for base models, V for super-resolution models.
    Auto,
    Epsilon,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleChoice {
    Cosine,
    Linear,
}

impl ScheduleChoice {
    pub fn kind(self) -> ScheduleKind {
        match self {
            ScheduleChoice::Cosine => ScheduleKind::Cosine,
            ScheduleChoice::Linear => ScheduleKind::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub base_width: usize,
    /// Encoder depth; 0 picks 3 at 32 px and above, 2 below.
    pub levels: usize,
    pub groups: usize,
    pub embed_dim: usize,
    pub target: TargetChoice,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_width: 8,
            levels: 0,
            groups: 4,
            embed_dim: 32,
            target: TargetChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage: String,
    pub slot: String,
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub schedule: ScheduleChoice,
    pub schedule_steps: usize,
    /// Resolutions of the base, sr1 and sr2 models.
    pub resolutions: [usize; 3],
    pub overlap: f64,
    /// Stride between training crops at the mid/high levels.
    pub crop_step: usize,
    pub log_every: u64,
    pub checkpoint_every: u64,
    /// Decay of the exponential moving average reported as `smoothed`.
    pub smoothing: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: "low".into(),
            slot: "base".into(),
            steps: 2000,
            batch: 8,
            lr: 1e-3,
            max_grad_norm: 1.0,
            seed: 0,
            schedule: ScheduleChoice::Cosine,
            schedule_steps: 250,
            resolutions: [8, 16, 32],
            overlap: 0.125,
            crop_step: 16,
            log_every: 10,
            checkpoint_every: 500,
            smoothing: 0.98,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn magnification(&self) -> AppResult<Magnification> {
        Magnification::parse(&self.stage).ok_or_else(|| AppError::validation("train.stage", "expected low, mid or high"))
    }

    pub fn model_slot(&self) -> AppResult<ModelSlot> {
        ModelSlot::parse(&self.slot).ok_or_else(|| AppError::validation("train.slot", "expected base, sr1 or sr2"))
    }

    pub fn net_config(&self) -> AppResult<ScoreNetConfig> {
        let slot = self.model_slot()?;
        let stage = self.magnification()?;
        let resolution = self.resolutions[slot.index()];
        let target = match self.model.target {
            TargetChoice::Epsilon => PredictionTarget::Epsilon,
            TargetChoice::V => PredictionTarget::V,
            TargetChoice::Auto if slot == ModelSlot::Base => PredictionTarget::Epsilon,
            TargetChoice::Auto => PredictionTarget::V,
        };
        let levels = match self.model.levels {
            0 if resolution >= 32 => 3,
            0 => 2,
            l => l,
        };
        let cfg = ScoreNetConfig {
            resolution,
            channels: 3,
            base_width: self.model.base_width,
            levels,
            groups: self.model.groups,
            embed_dim: self.model.embed_dim,
            conditioning: expected_conditioning(slot.index(), stage != Magnification::Low),
            target,
        };
        cfg.validate().map_err(|e| AppError::validation("train.model", e.to_string()))?;
        Ok(cfg)
    }

    pub fn extract_params(&self) -> ExtractParams {
        ExtractParams {
            patch: self.resolutions[2],
            step: self.crop_step,
            resolutions: self.resolutions,
            overlap: self.overlap,
            ..ExtractParams::default()
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        self.net_config()?;
        let [a, b, c] = self.resolutions;
        check(a > 0 && a < b && b < c && b % a == 0 && c % b == 0, "train.resolutions", "must grow by integer factors")?;
        check(self.batch > 0, "train.batch", "must be positive")?;
        check(self.lr > 0.0 && self.lr.is_finite(), "train.lr", "must be positive")?;
        check(self.max_grad_norm > 0.0, "train.max_grad_norm", "must be positive")?;
        check(self.schedule_steps >= 2, "train.schedule_steps", "need at least 2 steps")?;
        check(self.crop_step > 0, "train.crop_step", "must be positive")?;
        check((0.0..1.0).contains(&self.smoothing), "train.smoothing", "must lie in [0, 1)")?;
        check((0.0..1.0).contains(&self.overlap), "train.overlap", "must lie in [0, 1)")?;
        check(self.log_every > 0, "train.log_every", "must be positive")?;
        check(self.checkpoint_every > 0, "train.checkpoint_every", "must be positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentChoice {
    Snap,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WhiteConfig {
    pub min_channel: f64,
    pub fraction: f64,
    pub mean: f64,
    /// Stages (1-based positions) where white tiles are substituted.
    pub stages: [bool; 3],
}

impl Default for WhiteConfig {
    fn default() -> Self {
        let r = WhiteRule::default();
        Self {
            min_channel: r.min_channel,
            fraction: r.fraction,
            mean: r.mean,
            stages: [false, false, true],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub sizes: [usize; 3],
    pub patch: usize,
    pub overlap: f64,
    pub alignment: AlignmentChoice,
    pub final_size: Option<usize>,
    pub white: WhiteConfig,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let g = UrcdmGeometry::desk();
        Self {
            sizes: g.sizes,
            patch: g.patch,
            overlap: g.overlap,
            alignment: AlignmentChoice::Snap,
            final_size: None,
            white: WhiteConfig::default(),
        }
    }
}

impl GeometryConfig {
    pub fn geometry(&self) -> AppResult<UrcdmGeometry> {
        let g = UrcdmGeometry {
            sizes: self.sizes,
            patch: self.patch,
            overlap: self.overlap,
            alignment: match self.alignment {
                AlignmentChoice::Snap => ContextAlignment::Snap,
                AlignmentChoice::Strict => ContextAlignment::Strict,
            },
            white_rule: WhiteRule {
                min_channel: self.white.min_channel,
                fraction: self.white.fraction,
                mean: self.white.mean,
            },
            white_stages: self.white.stages,
            final_size: self.final_size,
        };
        g.validate().map_err(|e| AppError::validation("geometry", e.to_string()))?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Directory holding the nine `<stage>-<slot>.urck` model files.
    pub checkpoints: PathBuf,
    pub seed: u64,
    pub workers: usize,
    /// Reverse-chain length; shorter than the training schedule respaces it.
    pub sampling_steps: usize,
    pub geometry: GeometryConfig,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            checkpoints: PathBuf::from("checkpoints"),
            seed: 0,
            workers: 1,
            sampling_steps: 50,
            geometry: GeometryConfig::default(),
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> AppResult<UrcdmGeometry> {
        check(self.workers > 0, "sample.workers", "must be positive")?;
        check(self.sampling_steps > 0, "sample.sampling_steps", "must be positive")?;
        self.geometry.geometry()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Number of pFID crops drawn.
    pub crops: usize,
    pub scales: Vec<f64>,
    pub seed: u64,
    pub extractor_seed: u64,
    /// Neighbourhood size of the precision/recall manifolds.
    pub k: usize,
    /// Pyramid level crops are drawn from (0 = coarsest).
    pub level: usize,
    /// Also score pure-noise images as a reference floor.
    pub noise_baseline: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            crops: 2000,
            scales: vec![1.0, 0.5, 0.25],
            seed: 0,
            extractor_seed: 0,
            k: 3,
            level: 2,
            noise_baseline: true,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> AppResult<()> {
        check(self.crops >= 2, "metrics.crops", "need at least 2 crops")?;
        check(!self.scales.is_empty(), "metrics.scales", "must not be empty")?;
        for s in &self.scales {
            check(ALLOWED_SCALES.contains(s), "metrics.scales", format!("{s} is not one of 1, 0.5, 0.25, 0.125"))?;
        }
        check(self.k > 0, "metrics.k", "must be positive")?;
        check(self.level < 3, "metrics.level", "must be 0, 1 or 2")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub port: u16,
    pub host: String,
    /// `<pools>/<condition>/<real|synthetic>/<magnification>/*.png`
    pub pools: PathBuf,
    /// Append-only judgment log, replayed at startup.
    pub log: PathBuf,
    pub trials_per_session: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            host: "127.0.0.1".into(),
            pools: PathBuf::from("pools"),
            log: PathBuf::from("judgments.jsonl"),
            trials_per_session: 20,
        }
    }
}

impl ServeConfig {
    pub fn validate(&self) -> AppResult<()> {
        check(self.trials_per_session > 0, "serve.trials_per_session", "must be positive")?;
        check(!self.host.is_empty(), "serve.host", "must not be empty")
    }
}
