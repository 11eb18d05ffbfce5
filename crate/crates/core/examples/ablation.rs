//! Frequency ablation on synthetic textures: full model vs. no frequency
//! loss vs. no frequency branch, scored by log-spectral distance.
//!
//! cargo run --release --example ablation -- [iterations] [seeds] [base_channels]

use fscn::ablation::{run_ablation, AblationConfig};

fn main() -> fscn::Result<()> {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric arguments"))
        .collect();
    let iterations = args.first().copied().unwrap_or(300);
    let seeds = args.get(1).copied().unwrap_or(2);
    let base = args.get(2).copied().unwrap_or(8);

    let mut cfg = AblationConfig::default();
    cfg.base.iterations = iterations;
    cfg.base.generator.base_channels = base as usize;
    cfg.seeds = (0..seeds).collect();

    let table = run_ablation(&cfg, |seed, v, lsd| println!("seed {seed} {:<15} lsd {lsd:.6}", v.name()))?;
    print!("\n{table}");
    println!("full < w/o branch on {}/{} seeds", table.full_wins(), table.lsd.len());
    println!("direction holds: {}", table.direction_holds());
    Ok(())
}
