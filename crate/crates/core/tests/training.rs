#![cfg(not(feature = "f32"))]

use std::path::Path;

use fscn::commands::{cmd_train, TrainArgs};
use fscn::config::RunConfig;
use fscn::io::checkpoint::Checkpoint;
use fscn::train::{run_training, RunLayout, Trainer};
use fscn::Error;

/// Small enough for a few steps per second.
fn tiny(extra: &[&str]) -> Vec<String> {
    let mut o: Vec<String> = [
        "model.base_channels=4",
        "model.freq_blocks=1",
        "disc.base_channels=4",
        "disc.layers=3",
        "data.count=4",
        "train.batch_size=2",
        "train.sample_every=0",
        "train.checkpoint_every=5",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    o.extend(extra.iter().map(|s| s.to_string()));
    o
}

fn train(dir: &Path, overrides: &[String], resume: Option<&Path>) -> fscn::Result<()> {
    cmd_train(&TrainArgs {
        config_file: None,
        overrides,
        run_dir: Some(dir),
        resume,
    })
    .map(|_| ())
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn identical_config_and_seed_give_identical_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = tiny(&["train.iterations=6", "train.seed=3"]);
    train(&a, &o, None).unwrap();
    train(&b, &o, None).unwrap();
    let layout = |d: &Path| RunLayout::new(d);
    assert_eq!(read(&layout(&a).losses()), read(&layout(&b).losses()));
    assert_eq!(read(&layout(&a).checkpoint()), read(&layout(&b).checkpoint()));
    assert_eq!(read(&layout(&a).config()), read(&layout(&b).config()));
}

#[test]
fn different_seeds_diverge() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train(&a, &tiny(&["train.iterations=2", "train.seed=1"]), None).unwrap();
    train(&b, &tiny(&["train.iterations=2", "train.seed=2"]), None).unwrap();
    assert_ne!(read(&RunLayout::new(&a).losses()), read(&RunLayout::new(&b).losses()));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (straight, split) = (tmp.path().join("straight"), tmp.path().join("split"));
    train(&straight, &tiny(&["train.iterations=20"]), None).unwrap();
    train(&split, &tiny(&["train.iterations=10"]), None).unwrap();
    let ck = RunLayout::new(&split).checkpoint();
    let resume_from = tmp.path().join("step10.bin");
    std::fs::copy(&ck, &resume_from).unwrap();
    train(&split, &["train.iterations=20".to_string()], Some(&resume_from)).unwrap();
    assert_eq!(read(&RunLayout::new(&straight).losses()), read(&RunLayout::new(&split).losses()));
    assert_eq!(read(&RunLayout::new(&straight).checkpoint()), read(&ck));
}

#[test]
fn resume_refuses_model_changes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    train(&dir, &tiny(&["train.iterations=1"]), None).unwrap();
    let ck = RunLayout::new(&dir).checkpoint();
    let err = train(&dir, &["model.fusion=none".to_string()], Some(&ck)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn divergence_stops_training_and_keeps_last_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("nan");
    let mut cfg = RunConfig::default();
    for o in tiny(&["train.iterations=40", "optim.g_lr=1e200", "train.checkpoint_every=1"]) {
        cfg.apply_override(&o).unwrap();
    }
    let data = fscn::commands::load_dataset(&cfg).unwrap();
    let mut trainer = Trainer::new(cfg, data).unwrap();
    let layout = RunLayout::new(&dir);
    let err = run_training(&mut trainer, &layout).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    let ck = Checkpoint::load(&layout.checkpoint()).unwrap();
    assert_eq!(ck.step, trainer.step);
    assert!(ck.generator.iter().all(|p| p.value.is_finite()));
    let rows = std::fs::read_to_string(layout.losses()).unwrap().lines().count() - 1;
    assert_eq!(rows as u64, trainer.step);
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("t");
    train(&dir, &tiny(&["train.iterations=1"]), None).unwrap();
    let bytes = read(&RunLayout::new(&dir).checkpoint());
    assert!(Checkpoint::from_bytes(&bytes).is_ok());
    for cut in [0, 8, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Checkpoint(_))));
    }
}
