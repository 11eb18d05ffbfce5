#![cfg(not(feature = "f32"))]

use std::path::Path;
use std::process::{Command, Output};

use fscn::io::image::{load_image, save_image};
use fscn::Tensor;

fn fscn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fscn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("FSCN_RUN_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_run(dir: &Path) {
    let o = fscn(&[
        "train",
        "--set", "model.base_channels=4",
        "--set", "model.freq_blocks=1",
        "--set", "disc.base_channels=4",
        "--set", "data.count=2",
        "--set", "train.batch_size=2",
        "--set", "train.sample_every=0",
        "--iterations", "2",
        "--run-dir", s(dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn mask_subcommand_writes_a_binary_pgm() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m.pgm");
    let o = fscn(&["mask", "--preset", "thick", "--seed", "5", "--size", "48", "--out", s(&out), "--show"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("preset=thick") && text.contains("coverage"));
    let m = load_image(&out).unwrap();
    assert_eq!(m.shape(), &[3, 48, 48]);
    assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn spectrum_of_a_constant_image_is_a_centred_dot() {
    let tmp = tempfile::tempdir().unwrap();
    let (img, out) = (tmp.path().join("c.ppm"), tmp.path().join("s.pgm"));
    save_image(&Tensor::full(&[3, 8, 8], 0.5), &img).unwrap();
    assert!(fscn(&["spectrum", "--image", s(&img), "--out", s(&out)]).status.success());
    let g = load_image(&out).unwrap();
    for (i, &v) in g.data()[..64].iter().enumerate() {
        assert_eq!(v, if i == 4 * 8 + 4 { 1.0 } else { 0.0 }, "pixel {i}");
    }
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    assert_eq!(fscn(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(fscn(&["frobnicate"]).status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let o = fscn(&["train", "--set", "model.base_chanels=4", "--run-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("base_chanels"));
    let o = fscn(&["train", "--fusion", "sideways", "--run-dir", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_subcommand_reports_and_passes() {
    let o = fscn(&["gradcheck", "--seeds", "2", "--filter", "sigmoid"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("PASS sigmoid") && text.contains("0 failed"));
}

#[test]
fn infer_and_eval_on_a_trained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    tiny_run(&run);
    let ck = run.join("checkpoint.bin");
    assert!(run.join("losses.csv").exists() && run.join("config.txt").exists());

    // an all-zero mask leaves the composite equal to the input
    let img = Tensor::from_fn(&[3, 32, 32], |i| ((i * 13) % 256) as f64 / 255.0);
    let (img_path, mask_path) = (tmp.path().join("in.ppm"), tmp.path().join("zero.pgm"));
    save_image(&img, &img_path).unwrap();
    save_image(&Tensor::zeros(&[1, 32, 32]), &mask_path).unwrap();
    let out_dir = tmp.path().join("out");
    let o = fscn(&[
        "infer", "--checkpoint", s(&ck), "--image", s(&img_path), "--mask", s(&mask_path), "--out-dir", s(&out_dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let comp = load_image(&out_dir.join("composite.ppm")).unwrap();
    assert!(comp.max_abs_diff(&img).unwrap() < 1e-12);
    assert!(out_dir.join("output.ppm").exists());

    // wrong size names both extents
    let big = tmp.path().join("big.ppm");
    save_image(&Tensor::zeros(&[3, 64, 64]), &big).unwrap();
    let o = fscn(&["infer", "--checkpoint", s(&ck), "--image", s(&big), "--out-dir", s(&out_dir)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("64x64") && stderr(&o).contains("32x32"), "{}", stderr(&o));

    let csv = tmp.path().join("metrics.csv");
    let o = fscn(&["eval", "--checkpoint", s(&ck), "--count", "3", "--out", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("image_id,ssim,psnr,lsd"));
    assert_eq!(text.lines().count(), 5, "{text}");
}

#[test]
fn run_dir_comes_from_the_environment_when_no_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("env-run");
    let o = Command::new(env!("CARGO_BIN_EXE_fscn"))
        .args([
            "train", "--set", "model.base_channels=4", "--set", "model.freq_blocks=1", "--set", "data.count=2",
            "--set", "train.batch_size=2", "--set", "train.sample_every=0", "--iterations", "1",
        ])
        .env("RUST_LOG", "warn")
        .env("FSCN_RUN_DIR", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(root.join("checkpoint.bin").exists());
}
