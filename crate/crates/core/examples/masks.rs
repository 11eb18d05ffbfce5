//! Coverage statistics of the shipped mask presets, plus one PGM per preset.
//!
//! cargo run --release --example masks -- [samples] [size] [out_dir]

use std::path::PathBuf;

use fscn::io::image::save_image;
use fscn::maskgen::{generate_mask, MaskConfig, Preset};

fn main() -> fscn::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples: u64 = args.next().map_or(1000, |a| a.parse().expect("sample count"));
    let size: usize = args.next().map_or(64, |a| a.parse().expect("mask size"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/mask-samples".into()));
    std::fs::create_dir_all(&out).map_err(|e| fscn::Error::Io { path: out.clone(), source: e })?;

    println!("# {samples} seeds at {size}x{size}");
    println!("preset,min,mean,max");
    for preset in [Preset::Thin, Preset::Medium, Preset::Thick] {
        let cfg = MaskConfig::preset(preset)?;
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, 0.0f64, 0.0f64);
        for seed in 0..samples {
            let c = generate_mask(&cfg, seed, size, size)?.coverage() as f64;
            lo = lo.min(c);
            hi = hi.max(c);
            sum += c;
        }
        println!("{preset},{lo:.6},{:.6},{hi:.6}", sum / samples as f64);
        let mask = generate_mask(&cfg, 0, size, size)?;
        save_image(mask.plane(), &out.join(format!("{preset}.pgm")))?;
    }
    println!("# sample masks in {}", out.display());
    Ok(())
}
