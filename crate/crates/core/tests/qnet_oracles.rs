mod common;

use proptest::prelude::*;
use rand::Rng;
use signalq::qnet::QNetwork;
use signalq::rng::rng_from;

/// Straight-line evaluation with explicit index arithmetic.
fn reference_forward(net: &QNetwork, x: &[f64]) -> Vec<f64> {
    let layers = net.layers();
    let mut a = x.to_vec();
    for (li, l) in layers.iter().enumerate() {
        let mut z = vec![0.0; l.rows];
        for r in 0..l.rows {
            let mut s = l.b[r];
            for c in 0..l.cols {
                s += l.w[r * l.cols + c] * a[c];
            }
            z[r] = if li + 1 < layers.len() && s < 0.0 { 0.0 } else { s };
        }
        a = z;
    }
    a
}

#[test]
fn analytic_gradients_match_central_differences() {
    let worst = common::gradient_check(100, 4242);
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn forward_matches_reference_evaluator() {
    let mut rng = rng_from(99);
    for _ in 0..200 {
        let net = common::random_network(&mut rng);
        let x: Vec<f64> = (0..net.input_size()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = net.forward(&x).unwrap();
        let want = reference_forward(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
        }
    }
}

#[test]
fn default_agent_architecture_has_expected_shape() {
    let net = QNetwork::xavier(&[16, 64, 64, 3], &mut rng_from(1)).unwrap();
    assert_eq!(net.arch(), vec![16, 64, 64, 3]);
    assert_eq!(net.parameters().count(), 16 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
    let limit = (6.0f64 / (16.0 + 64.0)).sqrt();
    assert!(net.layers()[0].w.iter().all(|w| w.abs() <= limit));
    assert!(net.layers().iter().all(|l| l.b.iter().all(|&b| b == 0.0)));
}

proptest! {
    #[test]
    fn weights_round_trip_bitwise(seed in any::<u64>()) {
        let net = common::random_network(&mut rng_from(seed));
        let back = QNetwork::deserialize(&net.serialize()).unwrap();
        let a: Vec<u64> = net.parameters().map(f64::to_bits).collect();
        let b: Vec<u64> = back.parameters().map(f64::to_bits).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(net.arch(), back.arch());
    }
}
