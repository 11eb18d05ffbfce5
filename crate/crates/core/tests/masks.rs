#![cfg(not(feature = "f32"))]

use fscn::maskgen::{generate_mask, Mask, MaskConfig, Preset};
use fscn::Tensor;
use proptest::prelude::*;

const SEEDS: u64 = 1000;
const SIZE: usize = 64;

struct Band {
    min: f64,
    mean: f64,
    max: f64,
}

fn fixture() -> Vec<(Preset, Band)> {
    include_str!("fixtures/mask_coverage.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("preset"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |i: usize| f[i].parse::<f64>().unwrap();
            (f[0].parse().unwrap(), Band { min: num(1), mean: num(2), max: num(3) })
        })
        .collect()
}

fn measure(preset: Preset) -> Band {
    let cfg = MaskConfig::preset(preset).unwrap();
    let cov: Vec<f64> = (0..SEEDS).map(|s| generate_mask(&cfg, s, SIZE, SIZE).unwrap().coverage()).collect();
    Band {
        min: cov.iter().copied().fold(f64::INFINITY, f64::min),
        mean: cov.iter().sum::<f64>() / cov.len() as f64,
        max: cov.iter().copied().fold(0.0, f64::max),
    }
}

#[test]
fn shipped_presets_reproduce_recorded_bands() {
    let bands = fixture();
    assert_eq!(bands.len(), 3);
    for (preset, want) in bands {
        let got = measure(preset);
        // the fixture stores six decimals
        for (g, w) in [(got.min, want.min), (got.mean, want.mean), (got.max, want.max)] {
            assert!((g - w).abs() <= 5e-7, "{preset}: measured {g}, recorded {w}");
        }
    }
}

#[test]
fn thin_masks_cover_between_one_and_twenty_five_percent() {
    let b = measure(Preset::Thin);
    assert!(b.min >= 0.01 && b.max <= 0.25, "thin band [{}, {}]", b.min, b.max);
}

#[test]
fn presets_are_ordered_by_mean_coverage() {
    let [thin, medium, thick] = [Preset::Thin, Preset::Medium, Preset::Thick].map(|p| measure(p).mean);
    assert!(thin < medium && medium < thick, "{thin} {medium} {thick}");
}

#[test]
fn coverage_arithmetic() {
    let half = Mask::from_plane(Tensor::new(&[1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
    assert_eq!(half.coverage(), 0.5);
    let one = Mask::from_plane(Tensor::from_fn(&[1, 64, 64], |i| if i == 17 { 1.0 } else { 0.0 })).unwrap();
    assert_eq!(one.coverage(), 1.0 / 4096.0);
}

#[test]
fn unsatisfiable_configs_are_rejected() {
    let mut cfg = MaskConfig::preset(Preset::Thick).unwrap();
    cfg.box_side_min = 40;
    cfg.box_side_max = 40;
    assert!(generate_mask(&cfg, 0, 32, 32).is_err());
    assert!(generate_mask(&MaskConfig::preset(Preset::Thin).unwrap(), 0, 8, 64).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn masks_are_binary_nondegenerate_and_reproducible(
        seed in any::<u64>(),
        preset in prop::sample::select(vec![Preset::Thin, Preset::Medium, Preset::Thick]),
        h in 16usize..=48,
        w in 16usize..=48,
    ) {
        let cfg = MaskConfig::preset(preset).unwrap();
        let a = generate_mask(&cfg, seed, h, w).unwrap();
        prop_assert_eq!(a.plane().shape(), &[1, h, w]);
        prop_assert!(a.plane().data().iter().all(|&v| v == 0.0 || v == 1.0));
        prop_assert!(a.coverage() > 0.0 && a.coverage() < 1.0);
        prop_assert_eq!(a, generate_mask(&cfg, seed, h, w).unwrap());
    }
}
