#![cfg(not(feature = "f32"))]

use fscn::blocks::{fscab_aggregate, fscab_scores, Fscab, FSCAB_EPS};
use fscn::{Graph, ParamStore, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn features(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.0f64..1.0, c * h * w).prop_map(move |v| Tensor::new(&[1, c, h, w], v).unwrap())
}

fn pair() -> impl Strategy<Value = (Tensor, Tensor)> {
    (1usize..=4, 1usize..=3, 1usize..=4).prop_flat_map(|(c, h, w)| (features(c, h, w), features(c, h, w)))
}

fn scores(f: &Tensor, s: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let (fv, sv) = (g.constant(f.clone()), g.constant(s.clone()));
    let out = fscab_scores(&mut g, fv, sv, FSCAB_EPS).unwrap();
    g.value(out).clone()
}

fn attend(f: &Tensor, s: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let (fv, sv) = (g.constant(f.clone()), g.constant(s.clone()));
    let sc = fscab_scores(&mut g, fv, sv, FSCAB_EPS).unwrap();
    let y = fscab_aggregate(&mut g, sc, sv, FSCAB_EPS).unwrap();
    g.value(y).clone()
}

/// Reorders the positions of a 1×C×1×N tensor (H flattened into W).
fn permute(x: &Tensor, perm: &[usize]) -> Tensor {
    let [_, c, h, w] = *x.shape() else { unreachable!() };
    let n = h * w;
    Tensor::from_fn(x.shape(), |i| {
        let (ch, p) = (i / n, i % n);
        x.data()[ch * n + perm[p]]
    })
    .reshape(&[1, c, h, w])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_lie_in_unit_interval((f, s) in pair()) {
        let sc = scores(&f, &s);
        prop_assert!(sc.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn row_weights_sum_to_one_when_any_score_positive((f, s) in pair()) {
        let sc = scores(&f, &s);
        let n = sc.shape()[1];
        for i in 0..n {
            let row = &sc.data()[i * n..(i + 1) * n];
            let total: f64 = row.iter().sum();
            let weight_sum: f64 = row.iter().map(|v| v / (total + FSCAB_EPS)).sum();
            prop_assert!((0.0..=1.0).contains(&weight_sum));
            // a positive score is at least ~1e-4 only when fibers are not
            // nearly orthogonal; below that eps dominates by design
            if total > 1e-2 {
                prop_assert!((weight_sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_position_passes_through(f in features(3, 1, 1), s in features(3, 1, 1)) {
        let y = attend(&f, &s);
        let sc = scores(&f, &s).data()[0];
        if sc > 1e-2 {
            prop_assert!(y.max_abs_diff(&s).unwrap() < 1e-6);
        } else {
            // orthogonal or opposed fibers leave no weight at all
            prop_assert!(y.data().iter().zip(s.data()).all(|(a, b)| a.abs() <= b.abs() + 1e-12));
        }
    }

    #[test]
    fn permutation_equivariant(
        (f, s) in (1usize..=3, 2usize..=6).prop_flat_map(|(c, n)| (features(c, 1, n), features(c, 1, n))),
        seed in any::<u64>(),
    ) {
        let n = f.shape()[3];
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let y = attend(&f, &s);
        let y_perm = attend(&permute(&f, &perm), &permute(&s, &perm));
        let expected = permute(&y, &perm);
        prop_assert_eq!(y_perm, expected);
    }
}

#[test]
#[allow(clippy::approx_constant)]
fn two_position_worked_example() {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let f = Tensor::new(&[1, 2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let s = Tensor::new(&[1, 2, 1, 2], vec![1.0, r, 0.0, r]).unwrap();
    let sc = scores(&f, &s);
    for (got, want) in sc.data().iter().zip([1.0, 0.7071, 0.0, 0.7071]) {
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}

#[test]
fn identity_embedding_block_matches_free_functions() {
    let mut store = ParamStore::new("t");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let block = Fscab::new(&mut store, &mut rng, "fscab", 3).unwrap();
    block.set_identity(&mut store);
    let f = Tensor::from_fn(&[1, 3, 2, 2], |i| ((i * 7) % 5) as f64 - 2.0);
    let s = Tensor::from_fn(&[1, 3, 2, 2], |i| ((i * 3) % 4) as f64 * 0.5);
    let mut g = Graph::new();
    let (fv, sv) = (g.constant(f.clone()), g.constant(s.clone()));
    let y = block.forward(&mut g, &store.frozen(), fv, sv).unwrap();
    assert!(g.value(y).max_abs_diff(&attend(&f, &s)).unwrap() < 1e-12);
}
