use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use urcdm::model_io::{self, ModelFile};
use urcdm::train::read_loss_log;
use urcdm::config::TrainConfig;
use urcdm_core::scorenet::ScoreNet;

fn urcdm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urcdm"))
        .args(args)
        .current_dir(dir)
        .env_remove("URCDM_OUTPUT_ROOT")
        .env("URCDM_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_corpus(dir: &Path) {
    fs::write(dir.join("ds.toml"), "count = 2\nsizes = [32, 60, 116]\n").unwrap();
    let o = urcdm(dir, &["dataset-gen", "--config", "ds.toml", "--out", "corpus"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn plan_prints_the_desk_grids() {
    let dir = tempfile::tempdir().unwrap();
    let o = urcdm(dir.path(), &["plan"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("stage=2 canvas=200 tiles=49 grid=7x7"), "{text}");
    assert!(text.contains("stage=3 canvas=1376 tiles=2401 grid=49x49"), "{text}");
    let o = urcdm(dir.path(), &["sample", "--dry-run"]);
    assert_eq!(stdout(&o), text);
}

#[test]
fn invalid_configs_exit_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "count = 2\ncolour = true\n").unwrap();
    let o = urcdm(dir.path(), &["dataset-gen", "--config", "bad.toml", "--out", "corpus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    assert!(!dir.path().join("corpus").exists());
    fs::write(dir.path().join("bad.toml"), "count = 0\n").unwrap();
    let o = urcdm(dir.path(), &["dataset-gen", "--config", "bad.toml", "--out", "corpus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("corpus").exists());
    small_corpus(dir.path());
    let o = urcdm(dir.path(), &["train", "--corpus", "corpus", "--out", "ck", "--slot", "sr9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("ck").exists());
}

#[test]
fn missing_inputs_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = urcdm(dir.path(), &["sample", "--out", "gen", "--checkpoints", "absent"]);
    assert_eq!(o.status.code(), Some(4));
    let o = urcdm(dir.path(), &["train", "--corpus", "absent", "--out", "ck"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn zero_steps_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    fs::write(dir.path().join("t.toml"), "stage = \"mid\"\nslot = \"sr1\"\nsteps = 0\nseed = 5\n").unwrap();
    let o = urcdm(dir.path(), &["train", "--config", "t.toml", "--corpus", "corpus", "--out", "ck"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = model_io::load(&dir.path().join("ck/mid-sr1.urck")).unwrap();
    let cfg = TrainConfig { stage: "mid".into(), slot: "sr1".into(), steps: 0, seed: 5, ..Default::default() };
    let init = ScoreNet::init(cfg.net_config().unwrap(), 5).unwrap();
    let expected = ModelFile { net: init, schedule_kind: m.schedule_kind, schedule_steps: 250, steps_done: 0, seed: 5 };
    assert_eq!(model_io::encode(&m), model_io::encode(&expected));
    assert!(dir.path().join("ck/mid-sr1.config.toml").is_file());
}

#[test]
fn training_logs_every_step_and_resolves_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    fs::write(dir.path().join("t.toml"), "steps = 6\nlog_every = 2\nbatch = 2\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_urcdm"))
        .args(["train", "--config", "t.toml", "--corpus", "corpus", "--out", "ck"])
        .current_dir(dir.path())
        .env("URCDM_OUTPUT_ROOT", dir.path().join("root"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_loss_log(&dir.path().join("root/ck/low-base.loss.log")).unwrap();
    assert_eq!(records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![2, 4, 6]);
    assert!(records.iter().all(|r| r.loss.is_finite() && r.smoothed > 0.0));
    assert_eq!(model_io::load(&dir.path().join("root/ck/low-base.urck")).unwrap().steps_done, 6);
}

#[test]
fn divergence_exits_3_and_keeps_the_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    fs::write(dir.path().join("t.toml"), "steps = 50\nlr = 1e300\ncheckpoint_every = 1\nlog_every = 1\n").unwrap();
    let o = urcdm(dir.path(), &["train", "--config", "t.toml", "--corpus", "corpus", "--out", "ck"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let m = model_io::load(&dir.path().join("ck/low-base.urck")).unwrap();
    assert!(m.steps_done < 50);
    let logged = read_loss_log(&dir.path().join("ck/low-base.loss.log")).unwrap();
    assert_eq!(logged.last().map_or(0, |r| r.step), m.steps_done);
}
