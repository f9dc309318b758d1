mod common;

use signalq::metrics::percent_change;

#[test]
fn aggregate_matches_two_pass_oracle() {
    if let Some(m) = common::aggregate_mismatch(1000, 2024) {
        panic!("{m}");
    }
}

#[test]
fn percent_change_reference_values() {
    let pc = percent_change(165.5, 92.4091).unwrap();
    assert!((pc - 44.1637).abs() < 1e-4, "{pc}");
}

#[test]
fn replay_sampling_is_uniform() {
    let p = common::replay_uniformity_p(8);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn replay_evicts_oldest_first() {
    assert_eq!(common::fifo_tags(), (vec![2.0, 3.0, 4.0], 4));
}
