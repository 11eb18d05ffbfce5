#![cfg(not(feature = "f32"))]

use fscn::spectral::fft::Method;
use fscn::spectral::{
    dft2, dft2_with, frequency_loss, idft2, log_real_transform, ComplexSpectrum, LogSpectrumConfig, SpectrumVar,
};
use fscn::{Graph, Tensor};
use proptest::prelude::*;

fn image(h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.0f64..1.0, h * w).prop_map(move |v| Tensor::new(&[h, w], v).unwrap())
}

fn sized_image() -> impl Strategy<Value = Tensor> {
    (1usize..=9, 1usize..=9).prop_flat_map(|(h, w)| image(h, w))
}

/// Textbook O(N^4) transform.
fn naive_dft(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let [h, w] = *x.shape() else { panic!("2-D") };
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            for y in 0..h {
                for k in 0..w {
                    let phase = -2.0 * std::f64::consts::PI * ((u * y) as f64 / h as f64 + (v * k) as f64 / w as f64);
                    re[u * w + v] += x.data()[y * w + k] * phase.cos();
                    im[u * w + v] += x.data()[y * w + k] * phase.sin();
                }
            }
        }
    }
    (re, im)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_16x16(x in image(16, 16)) {
        let back = idft2(&dft2(&x).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&x).unwrap() < 1e-9);
    }

    #[test]
    fn round_trip_any_extent(x in sized_image()) {
        let back = idft2(&dft2(&x).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&x).unwrap() < 1e-9);
    }

    #[test]
    fn parseval(x in image(16, 16)) {
        let spatial: f64 = x.data().iter().map(|v| v * v).sum();
        let spectral = dft2(&x).unwrap().energy() / 256.0;
        prop_assert!((spatial - spectral).abs() <= 1e-9 * spatial.max(1e-300));
    }

    #[test]
    fn linearity(x in image(16, 16), y in image(16, 16), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let combo = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
        let (fx, fy, fc) = (dft2(&x).unwrap(), dft2(&y).unwrap(), dft2(&combo).unwrap());
        let re = fx.re.zip_map(&fy.re, |p, q| a * p + b * q).unwrap();
        let im = fx.im.zip_map(&fy.im, |p, q| a * p + b * q).unwrap();
        prop_assert!(fc.re.max_abs_diff(&re).unwrap() < 1e-10);
        prop_assert!(fc.im.max_abs_diff(&im).unwrap() < 1e-10);
    }

    #[test]
    fn conjugate_symmetry(x in sized_image()) {
        let [h, w] = *x.shape() else { unreachable!() };
        let f = dft2(&x).unwrap();
        for u in 0..h {
            for v in 0..w {
                let (mu, mv) = ((h - u) % h, (w - v) % w);
                prop_assert!((f.re.data()[u * w + v] - f.re.data()[mu * w + mv]).abs() < 1e-10);
                prop_assert!((f.im.data()[u * w + v] + f.im.data()[mu * w + mv]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fast_path_matches_direct(x in (0u32..=5, 0u32..=5).prop_flat_map(|(a, b)| image(1 << a, 1 << b))) {
        let fast = dft2_with(&x, Method::Auto).unwrap();
        let direct = dft2_with(&x, Method::Direct).unwrap();
        prop_assert!(fast.re.max_abs_diff(&direct.re).unwrap() < 1e-9);
        prop_assert!(fast.im.max_abs_diff(&direct.im).unwrap() < 1e-9);
    }

    #[test]
    fn matches_textbook_sum(x in sized_image()) {
        let f = dft2(&x).unwrap();
        let (re, im) = naive_dft(&x);
        prop_assert!(max_diff(f.re.data(), &re) < 1e-9);
        prop_assert!(max_diff(f.im.data(), &im) < 1e-9);
    }

    #[test]
    fn log_real_is_nonnegative_and_finite(x in sized_image()) {
        let l = log_real_transform(&dft2(&x).unwrap(), LogSpectrumConfig::default());
        prop_assert!(l.values.data().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn frequency_loss_vanishes_on_own_spectrum(x in image(8, 8), y in image(8, 8)) {
        let mut g = Graph::new();
        let target = g.constant(x.clone());
        let own = SpectrumVar::constant(&mut g, &dft2(&x).unwrap());
        let other = SpectrumVar::constant(&mut g, &dft2(&y).unwrap());
        let zero = frequency_loss(&mut g, &own, target, LogSpectrumConfig::default()).unwrap();
        let pos = frequency_loss(&mut g, &other, target, LogSpectrumConfig::default()).unwrap();
        prop_assert!(g.value(zero).item().unwrap().abs() < 1e-12);
        prop_assert!(g.value(pos).item().unwrap() >= 0.0);
    }
}

#[test]
fn batched_planes_transform_independently() {
    let a = Tensor::from_fn(&[4, 4], |i| (i as f64 * 0.7).sin());
    let b = Tensor::from_fn(&[4, 4], |i| (i as f64 * 1.3).cos());
    let both = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
    let f = dft2(&both).unwrap();
    for (k, single) in [a, b].iter().enumerate() {
        let s = dft2(single).unwrap();
        assert!(f.re.index_outer(k).unwrap().max_abs_diff(&s.re).unwrap() < 1e-12);
        assert!(f.im.index_outer(k).unwrap().max_abs_diff(&s.im).unwrap() < 1e-12);
    }
}

#[test]
fn inverse_of_mismatched_planes_is_rejected() {
    assert!(ComplexSpectrum::new(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2, 3])).is_err());
}
