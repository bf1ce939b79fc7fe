use std::fs;

use proptest::prelude::*;
use urcdm::config::{self, DatasetConfig, MetricsConfig, SampleConfig, TrainConfig};
use urcdm::model_io::{self, ModelFile};
use urcdm::report::{MetricEntry, MetricReport};
use urcdm::store::{self, Manifest};
use urcdm::train::LossRecord;
use urcdm::AppError;
use urcdm_core::diffusion::{Conditioning, PredictionTarget, ScheduleKind};
use urcdm_core::rng::NoiseStream;
use urcdm_core::scorenet::{ScoreNet, ScoreNetConfig};
use urcdm_core::synthdata::{gen_pyramid, GeneratorParams};

fn small() -> GeneratorParams {
    GeneratorParams { sizes: [32, 60, 116], ..Default::default() }
}

#[test]
fn pyramid_round_trips_through_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen_pyramid(4, &small()).unwrap();
    // 50px tiles split every level unevenly.
    let slide = store::write_pyramid(dir.path(), &p, 50).unwrap();
    assert!(slide.join(store::tile_name(2, 2, 2)).is_file());
    assert!(!slide.join(store::tile_name(2, 3, 0)).exists());
    assert_eq!(store::read_pyramid(&slide).unwrap(), p);
    let m = store::read_manifest(&slide).unwrap();
    assert_eq!(m.levels, vec![32, 60, 116]);
    assert_eq!(m.tile_size, 50);
    let corpus = store::read_corpus(dir.path()).unwrap();
    assert_eq!(corpus.len(), 1);
}

#[test]
fn corrupt_manifest_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen_pyramid(1, &small()).unwrap();
    let slide = store::write_pyramid(dir.path(), &p, 256).unwrap();
    let path = slide.join(store::MANIFEST);
    let text = fs::read_to_string(&path).unwrap();
    for (from, to, field) in [
        ("levels=32,60,116", "levels=32,x,116", "levels"),
        ("tile_size=256", "tile_size=0", "tile_size"),
        ("channels=3", "channels=4", "channels"),
        ("format=urcdm-pyramid-1", "format=other", "format"),
    ] {
        fs::write(&path, text.replace(from, to)).unwrap();
        let e = store::read_pyramid(&slide).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains(&format!("`{field}`")), "{e}");
    }
    fs::write(&path, text.replace("seed=1\n", "")).unwrap();
    assert!(store::read_pyramid(&slide).unwrap_err().to_string().contains("`seed`"));
}

#[test]
fn missing_tile_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let slide = store::write_pyramid(dir.path(), &gen_pyramid(2, &small()).unwrap(), 256).unwrap();
    fs::remove_file(slide.join(store::tile_name(1, 0, 0))).unwrap();
    assert_eq!(store::read_pyramid(&slide).unwrap_err().exit_code(), 4);
}

#[test]
fn empty_corpus_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(store::read_corpus(dir.path()), Err(AppError::Validation { .. })));
}

#[test]
fn manifest_text_round_trips() {
    let m = Manifest { id: "a".into(), seed: u64::MAX, channels: 3, tile_size: 7, levels: vec![1, 1, 9] };
    assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
}

fn net(seed: u64) -> ScoreNet {
    let cfg = ScoreNetConfig::new(8, Conditioning { images: 2, inpaint_mask: true }, PredictionTarget::V).with_width(4);
    ScoreNet::init(cfg, seed).unwrap()
}

#[test]
fn model_files_round_trip_bit_exact() {
    let m = ModelFile {
        net: net(3),
        schedule_kind: ScheduleKind::Cosine,
        schedule_steps: 250,
        steps_done: 17,
        seed: 0xdead_beef_cafe_f00d,
    };
    let bytes = model_io::encode(&m);
    let back = model_io::decode(&bytes).unwrap();
    assert_eq!(model_io::encode(&back), bytes);
    assert_eq!(back.seed, m.seed);
    assert_eq!(back.steps_done, 17);
    assert_eq!(back.net.config(), m.net.config());
    let cc = back.net.config().conditioning.channels(3);
    let x = NoiseStream::new(1).normal_tensor(&[2, 3, 8, 8]);
    let c = NoiseStream::new(2).normal_tensor(&[2, cc, 8, 8]);
    let a = m.net.predict(&x, &[0.1, 0.7], Some(&c)).unwrap();
    let b = back.net.predict(&x, &[0.1, 0.7], Some(&c)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn damaged_model_files_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.urck");
    let m = ModelFile { net: net(0), schedule_kind: ScheduleKind::Linear, schedule_steps: 10, steps_done: 0, seed: 0 };
    model_io::save(&path, &m).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    let n = bytes.len();
    // The format has no checksum, so damage is detected structurally.
    bytes[1] ^= 0x5a;
    fs::write(&path, &bytes).unwrap();
    let e = model_io::load(&path).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
    fs::write(&path, &bytes[..n / 3]).unwrap();
    assert_eq!(model_io::load(&path).unwrap_err().exit_code(), 2);
    assert_eq!(model_io::load(&dir.path().join("absent.urck")).unwrap_err().exit_code(), 4);
}

#[test]
fn configs_reject_unknown_keys_and_bad_values() {
    let e = config::parse::<TrainConfig>("stage = \"low\"\nlearning_rate = 1.0\n").unwrap_err();
    assert!(e.to_string().contains("learning_rate"), "{e}");
    let e = config::parse::<SampleConfig>("[geometry]\nsizes = [32, 200]\n").unwrap_err();
    assert_eq!(e.exit_code(), 2);
    let t: TrainConfig = config::parse("stage = \"mid\"\nslot = \"sr3\"\n").unwrap();
    assert!(t.validate().unwrap_err().to_string().contains("train.slot"));
    let d: DatasetConfig = config::parse("background = [0.6, 0.4]\n").unwrap();
    assert!(d.validate().is_err());
    let m: MetricsConfig = config::parse("scales = [0.3]\n").unwrap();
    assert!(m.validate().is_err());
    let s: SampleConfig = config::parse("[geometry]\nalignment = \"strict\"\n").unwrap();
    assert!(s.validate().unwrap_err().to_string().contains("whole number"));
}

#[test]
fn default_configs_are_valid_and_snapshots_reload() {
    TrainConfig::default().validate().unwrap();
    DatasetConfig::default().validate().unwrap();
    MetricsConfig::default().validate().unwrap();
    let g = SampleConfig::default().validate().unwrap();
    assert_eq!(g.sizes, [32, 200, 1376]);
    let cfg = TrainConfig { stage: "high".into(), slot: "sr2".into(), lr: 3e-3, ..Default::default() };
    let back: TrainConfig = config::parse(&config::to_toml(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
    let net = back.net_config().unwrap();
    assert_eq!((net.resolution, net.levels, net.target), (32, 3, PredictionTarget::V));
    assert_eq!(net.conditioning, Conditioning { images: 2, inpaint_mask: true });
    let base = TrainConfig::default().net_config().unwrap();
    assert_eq!((base.resolution, base.levels, base.target), (8, 2, PredictionTarget::Epsilon));
    assert_eq!(base.conditioning, Conditioning::NONE);
}

#[test]
fn metric_reports_round_trip() {
    let r = MetricReport {
        entries: vec![
            MetricEntry {
                name: "pfid".into(),
                value: Some(0.125),
                real_count: 10,
                generated_count: 10,
                seed: 3,
                extractor: "x".into(),
                note: None,
            },
            MetricEntry {
                name: "fid".into(),
                value: None,
                real_count: 2,
                generated_count: 1,
                seed: 3,
                extractor: "x".into(),
                note: Some("undersized".into()),
            },
        ],
    };
    assert_eq!(MetricReport::from_json(&r.to_json()).unwrap(), r);
    assert_eq!(r.get("pfid"), Some(0.125));
    assert_eq!(r.get("fid"), None);
    let text = r.to_text();
    assert!(text.contains("metric=pfid value=0.125000 real=10 generated=10 seed=3 extractor=x"));
    assert!(text.contains("value=none"));
}

proptest! {
    #[test]
    fn loss_lines_parse_back(step in 0u64..1_000_000, loss in 0.0f64..10.0, smoothed in 0.0f64..10.0) {
        let r = LossRecord { step, loss, smoothed };
        let back = LossRecord::parse(&r.line()).unwrap();
        prop_assert_eq!(back.step, step);
        prop_assert!((back.loss - loss).abs() <= 5e-7);
        prop_assert!((back.smoothed - smoothed).abs() <= 5e-7);
    }
}
