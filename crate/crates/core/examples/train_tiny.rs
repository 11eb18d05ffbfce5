//! Train a small generator/discriminator pair on synthetic textures and
//! write the usual run directory (config, loss log, samples, checkpoint).
//!
//! cargo run --release --example train_tiny -- [iterations] [run_dir]

use fscn::commands::load_dataset;
use fscn::config::RunConfig;
use fscn::train::{run_training, RunLayout, Trainer};

fn main() -> fscn::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let iterations = args.next().unwrap_or_else(|| "200".into());
    let dir = args.next().unwrap_or_else(|| "target/train_tiny".into());

    let mut cfg = RunConfig::default();
    for o in [
        "model.base_channels=8",
        &format!("train.iterations={iterations}"),
        "train.sample_every=100",
        "train.checkpoint_every=100",
    ] {
        cfg.apply_override(o)?;
    }
    let mut trainer = Trainer::new(cfg.clone(), load_dataset(&cfg)?)?;
    let layout = RunLayout::new(&dir);
    let log = run_training(&mut trainer, &layout)?;
    let (first, last) = (log.first().expect("at least one step"), log.last().expect("at least one step"));
    println!("step {:>5}: fre {:.4} rec {:.4}", first.step, first.fre, first.rec);
    println!("step {:>5}: fre {:.4} rec {:.4}", last.step, last.fre, last.rec);
    println!("run written to {dir}");
    Ok(())
}
