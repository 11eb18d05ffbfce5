//! Cross-attention scores between frequency and spatial fibers, on the
//! two-position case and on random features.
//!
//! cargo run --release --example fscab_attention

use fscn::blocks::{fscab_aggregate, fscab_scores, Fscab, FSCAB_EPS};
use fscn::{Graph, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fscn::Result<()> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    // two channels, two positions; layout is [channel][position]
    let freq = Tensor::new(&[1, 2, 1, 2], vec![1.0, 0.0, 0.0, 1.0])?;
    let spatial = Tensor::new(&[1, 2, 1, 2], vec![1.0, r, 0.0, r])?;
    let mut g = Graph::new();
    let (f, s) = (g.constant(freq), g.constant(spatial));
    let scores = fscab_scores(&mut g, f, s, FSCAB_EPS)?;
    let y = fscab_aggregate(&mut g, scores, s, FSCAB_EPS)?;
    println!("scores {:?}", g.value(scores).data());
    println!("output {:?}", g.value(y).data());

    // a learned block on random 8-channel 4×4 features
    let mut store = ParamStore::new("demo");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let block = Fscab::new(&mut store, &mut rng, "fscab", 8)?;
    let xf = Tensor::from_fn(&[1, 8, 4, 4], |i| ((i * 31 % 17) as f64 - 8.0) / 8.0);
    let xs = Tensor::from_fn(&[1, 8, 4, 4], |i| ((i * 11 % 13) as f64 - 6.0) / 6.0);
    let mut g = Graph::new();
    let (f, s) = (g.constant(xf), g.constant(xs));
    let scores = block.scores(&mut g, &store.frozen(), f, s)?;
    let sc = g.value(scores);
    let n = 16;
    let positive = sc.data().iter().filter(|&&v| v > 0.0).count();
    println!("{positive} of {} scores positive", n * n);
    for i in 0..3 {
        let row = &sc.data()[i * n..(i + 1) * n];
        let total: f64 = row.iter().sum();
        println!("row {i}: max {:.3}, weight sum {:.6}", row.iter().copied().fold(0.0, f64::max), total / (total + FSCAB_EPS));
    }
    Ok(())
}
