#![cfg(not(feature = "f32"))]

use fscn::losses::{adv_d_loss, adv_g_loss, fm_loss, rec_loss, total_loss, LossTerms, LossWeights};
use fscn::{Graph, Tensor};
use proptest::prelude::*;

fn scalar(g: &mut Graph, v: f64) -> fscn::Var {
    g.constant(Tensor::scalar(v))
}

fn images(n: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0.0f64..1.0, n * 3 * 4 * 4).prop_map(move |v| Tensor::new(&[n, 3, 4, 4], v).unwrap())
}

fn mask(n: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(prop::bool::ANY, n * 16)
        .prop_map(move |v| Tensor::new(&[n, 1, 4, 4], v.into_iter().map(|b| b as u8 as f64).collect()).unwrap())
}

#[test]
fn weighted_total_worked_example() {
    // fre 1, rec 0.1, adv 0.2, fm 0.01, perc 0.02 → 1 + 1 + 2 + 1 + 0.6
    let terms = [1.0, 0.1, 0.2, 0.01, 0.02];
    let w = LossWeights::default();
    let hand = 1.0 * terms[0] + 10.0 * terms[1] + 10.0 * terms[2] + 100.0 * terms[3] + 30.0 * terms[4];
    let mut g = Graph::new();
    let vars = terms.map(|t| scalar(&mut g, t));
    let total = total_loss(&mut g, vars, &w).unwrap();
    let got = g.value(total).item().unwrap();
    assert!((got - 5.6).abs() < 1e-12, "{got}");
    assert!((got - hand).abs() < 1e-12);
    let plain = LossTerms { fre: terms[0], rec: terms[1], adv_g: terms[2], fm: terms[3], perc: terms[4] }.total(&w);
    assert!((plain - got).abs() < 1e-12);
}

#[test]
fn adversarial_fixed_points() {
    let mut g = Graph::new();
    let zeros = g.constant(Tensor::zeros(&[2, 1, 3, 3]));
    let d = adv_d_loss(&mut g, zeros, zeros).unwrap();
    let gl = adv_g_loss(&mut g, zeros);
    let ln2 = std::f64::consts::LN_2;
    assert!((g.value(d).item().unwrap() - 2.0 * ln2).abs() < 1e-9);
    assert!((g.value(gl).item().unwrap() - ln2).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn total_is_linear_in_weights(
        terms in prop::array::uniform5(0.0f64..2.0),
        a in prop::array::uniform5(0.0f64..50.0),
        b in prop::array::uniform5(0.0f64..50.0),
    ) {
        let mk = |w: [f64; 5]| LossWeights { frequency: w[0], rec: w[1], adv: w[2], fm: w[3], perceptual: w[4] };
        let t = LossTerms { fre: terms[0], rec: terms[1], adv_g: terms[2], fm: terms[3], perc: terms[4] };
        let sum: [f64; 5] = std::array::from_fn(|i| a[i] + b[i]);
        let lhs = t.total(&mk(sum));
        let rhs = t.total(&mk(a)) + t.total(&mk(b));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn reconstruction_ignores_holes((gt, out, m) in (images(2), images(2), mask(2))) {
        // changing pixels inside holes must not change the masked loss
        let scrambled = Tensor::from_fn(out.shape(), |i| {
            let hole = m.data()[(i / 48) * 16 + i % 16] == 1.0;
            if hole { 1.0 - out.data()[i] } else { out.data()[i] }
        });
        let mut g = Graph::new();
        let gv = g.constant(gt);
        let (ov, sv) = (g.constant(out), g.constant(scrambled));
        let a = rec_loss(&mut g, gv, ov, &m, false).unwrap();
        let b = rec_loss(&mut g, gv, sv, &m, false).unwrap();
        prop_assert_eq!(g.value(a).item().unwrap(), g.value(b).item().unwrap());
    }

    #[test]
    fn reconstruction_vanishes_on_ground_truth((gt, m) in (images(1), mask(1))) {
        let mut g = Graph::new();
        let v = g.constant(gt);
        let l = rec_loss(&mut g, v, v, &m, false).unwrap();
        prop_assert_eq!(g.value(l).item().unwrap(), 0.0);
    }

    #[test]
    fn discriminator_loss_is_positive(r in prop::collection::vec(-20.0f64..20.0, 4), f in prop::collection::vec(-20.0f64..20.0, 4)) {
        let mut g = Graph::new();
        let rv = g.constant(Tensor::new(&[1, 1, 2, 2], r).unwrap());
        let fv = g.constant(Tensor::new(&[1, 1, 2, 2], f).unwrap());
        let d = adv_d_loss(&mut g, rv, fv).unwrap();
        let v = g.value(d).item().unwrap();
        prop_assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn feature_matching_is_symmetric_in_value(a in images(1), b in images(1)) {
        let mut g = Graph::new();
        let (av, bv) = (g.constant(a), g.constant(b));
        let ab = fm_loss(&mut g, &[av], &[bv]).unwrap();
        let ba = fm_loss(&mut g, &[bv], &[av]).unwrap();
        prop_assert_eq!(g.value(ab).item().unwrap(), g.value(ba).item().unwrap());
    }
}
