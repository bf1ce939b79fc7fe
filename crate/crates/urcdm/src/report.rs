//! Distribution metrics between a real and a generated corpus, written as a
//! text key-value report and as JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use urcdm_core::metrics::{
    default_feature_extractor, draw_crop_specs, fid, improved_precision, improved_recall, pfid, FeatureExtractor,
    PatchSource,
};
use urcdm_core::rng::{stable_hash, NoiseStream};
use urcdm_core::synthdata::{Image8, Pyramid};
use urcdm_core::Tensor;

use crate::config::{write_snapshot, MetricsConfig, SNAPSHOT};
use crate::error::{AppError, AppResult, IoContext};

/// Base crop side at scale 1, the tile size of the sampler.
pub const CROP_BASE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub name: String,
    /// `None` when the metric is undefined for these inputs.
    pub value: Option<f64>,
    pub real_count: usize,
    pub generated_count: usize,
    pub seed: u64,
    pub extractor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub entries: Vec<MetricEntry>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).and_then(|e| e.value)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let value = e.value.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"));
            write!(
                s,
                "metric={} value={value} real={} generated={} seed={} extractor={}",
                e.name, e.real_count, e.generated_count, e.seed, e.extractor
            )
            .unwrap();
            if let Some(n) = &e.note {
                write!(s, " note=\"{n}\"").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> AppResult<Self> {
        serde_json::from_str(text).map_err(|e| AppError::validation("metric report", e.to_string()))
    }

    /// Writes `metrics.txt`, `metrics.json` and the config snapshot.
    pub fn write(&self, dir: &Path, cfg: &MetricsConfig) -> AppResult<()> {
        fs::create_dir_all(dir).at(dir)?;
        let txt = dir.join("metrics.txt");
        fs::write(&txt, self.to_text()).at(&txt)?;
        let json = dir.join("metrics.json");
        fs::write(&json, self.to_json()).at(&json)?;
        write_snapshot(&dir.join(SNAPSHOT), cfg)
    }
}

/// Uniform-noise images matching `like` in size, a floor for the metrics.
pub fn noise_images(like: &[Image8], seed: u64) -> AppResult<Vec<Image8>> {
    like.iter()
        .enumerate()
        .map(|(k, img)| {
            let mut rng = NoiseStream::new(stable_hash(&[seed, k as u64, 0x6e6f697365]));
            let data = (0..img.bytes().len()).map(|_| (rng.next_u64() >> 56) as u8).collect();
            Ok(Image8::new(img.width(), img.height(), img.channels(), data)?)
        })
        .collect()
}

fn level<'a>(set: &'a [Pyramid], k: usize, what: &str) -> AppResult<Vec<&'a Image8>> {
    set.iter()
        .map(|p| {
            p.levels
                .get(k)
                .ok_or_else(|| AppError::validation(what, format!("pyramid {} has no level {k}", p.id)))
        })
        .collect()
}

fn patch_metrics(
    name: &str,
    real: &[&Image8],
    generated: &[&Image8],
    cfg: &MetricsConfig,
    extractor: &dyn FeatureExtractor,
) -> AppResult<Vec<MetricEntry>> {
    let canvas = real.iter().chain(generated).map(|i| i.width().min(i.height())).min().unwrap_or(0);
    let specs = draw_crop_specs(cfg.crops, &cfg.scales, canvas, CROP_BASE, cfg.seed)?;
    let r: Vec<&dyn PatchSource> = real.iter().map(|i| *i as &dyn PatchSource).collect();
    let g: Vec<&dyn PatchSource> = generated.iter().map(|i| *i as &dyn PatchSource).collect();
    let result = pfid(&r, &g, &specs, extractor)?;
    let entry = |metric: &str, value: f64| MetricEntry {
        name: format!("{metric}{name}"),
        value: Some(value),
        real_count: result.real.count,
        generated_count: result.generated.count,
        seed: cfg.seed,
        extractor: extractor.id(),
        note: None,
    };
    let precision = improved_precision(&result.real_features, &result.generated_features, cfg.k)?;
    let recall = improved_recall(&result.real_features, &result.generated_features, cfg.k)?;
    Ok(vec![
        entry("pfid", result.value),
        entry("precision", precision),
        entry("recall", recall),
    ])
}

fn whole_image_fid(
    real: &[&Image8],
    generated: &[&Image8],
    cfg: &MetricsConfig,
    extractor: &dyn FeatureExtractor,
) -> MetricEntry {
    let tensors = |set: &[&Image8]| -> Vec<Tensor> { set.iter().map(|i| i.to_tensor()).collect() };
    let (value, note) = match fid(&tensors(real), &tensors(generated), extractor) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    MetricEntry {
        name: "fid".into(),
        value,
        real_count: real.len(),
        generated_count: generated.len(),
        seed: cfg.seed,
        extractor: extractor.id(),
        note,
    }
}

/// pFID with precision/recall on crops of level `cfg.level`, FID on whole
/// level-0 images, and the same crop metrics against uniform noise when
/// `cfg.noise_baseline` is set (suffix `_noise`).
pub fn evaluate(real: &[Pyramid], generated: &[Pyramid], cfg: &MetricsConfig) -> AppResult<MetricReport> {
    cfg.validate()?;
    if real.is_empty() || generated.is_empty() {
        return Err(AppError::validation("metrics input", "need at least one real and one generated pyramid"));
    }
    let extractor = default_feature_extractor(cfg.extractor_seed);
    let real_level = level(real, cfg.level, "real corpus")?;
    let gen_level = level(generated, cfg.level, "generated corpus")?;
    let mut entries = patch_metrics("", &real_level, &gen_level, cfg, &extractor)?;
    entries.push(whole_image_fid(&level(real, 0, "real corpus")?, &level(generated, 0, "generated corpus")?, cfg, &extractor));
    if cfg.noise_baseline {
        let owned: Vec<Image8> = gen_level.iter().map(|i| (*i).clone()).collect();
        let noise = noise_images(&owned, cfg.seed)?;
        let noise_refs: Vec<&Image8> = noise.iter().collect();
        entries.extend(patch_metrics("_noise", &real_level, &noise_refs, cfg, &extractor)?);
    }
    Ok(MetricReport { entries })
}
