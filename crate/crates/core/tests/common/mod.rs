//! Oracles and generators shared by the integration tests and the acceptance
//! binary.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use signalq::dqn::{ReplayBuffer, StateVector, Transition};
use signalq::metrics::aggregate;
use signalq::controllers::{apply_interlock, transition_violation, AxisRequest, Color};
use signalq::netmodel::{
    conflicting_pairs, Edge, Junction, Network, Route, Scenario, VehicleParams,
};
use signalq::qnet::{Layer, QNetwork};
use signalq::rng::rng_from;
use signalq::simcore::{spawn_schedule, Simulation};

/// A corridor of `n` signalized junctions, each crossed by a two-way side
/// street, with straight routes and random geometry, timing and demand.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = rng_from(seed);
    let n = rng.random_range(1..=3usize);
    let mut junctions = Vec::new();
    let mut edges = Vec::new();
    let mut edge = |id: String, from: &str, to: &str, rng: &mut rand_chacha::ChaCha8Rng| {
        edges.push(Edge {
            id: id.clone(),
            from: from.into(),
            to: to.into(),
            length: rng.random_range(15.0..220.0),
            speed_limit: rng.random_range(4.0..20.0),
        });
        id
    };
    let corridor: Vec<String> = std::iter::once("W".to_string())
        .chain((0..n).map(|k| format!("J{k}")))
        .chain(std::iter::once("E".to_string()))
        .collect();
    let mut axis: HashMap<String, (Vec<String>, Vec<String>)> = HashMap::new();
    let mut eastbound = Vec::new();
    let mut westbound = Vec::new();
    for w in corridor.windows(2) {
        let e = edge(format!("{}_{}", w[0], w[1]), &w[0], &w[1], &mut rng);
        axis.entry(w[1].clone()).or_default().0.push(e.clone());
        eastbound.push(e);
        let e = edge(format!("{}_{}", w[1], w[0]), &w[1], &w[0], &mut rng);
        axis.entry(w[0].clone()).or_default().0.push(e.clone());
        westbound.push(e);
    }
    westbound.reverse();
    let mut routes = vec![
        Route { edges: eastbound, rate: rng.random_range(0.0..0.4) },
        Route { edges: westbound, rate: rng.random_range(0.0..0.4) },
    ];
    for k in 0..n {
        let j = format!("J{k}");
        let (north, south) = (format!("N{k}"), format!("S{k}"));
        let ns_in = edge(format!("{north}_{j}"), &north, &j, &mut rng);
        let ns_out = edge(format!("{j}_{south}"), &j, &south, &mut rng);
        let sn_in = edge(format!("{south}_{j}"), &south, &j, &mut rng);
        let sn_out = edge(format!("{j}_{north}"), &j, &north, &mut rng);
        axis.entry(j.clone()).or_default().1.extend([ns_in.clone(), sn_in.clone()]);
        routes.push(Route { edges: vec![ns_in, ns_out], rate: rng.random_range(0.0..0.4) });
        routes.push(Route { edges: vec![sn_in, sn_out], rate: rng.random_range(0.0..0.4) });
        junctions.push(Junction::unsignalized(north));
        junctions.push(Junction::unsignalized(south));
    }
    junctions.push(Junction::unsignalized("W"));
    junctions.push(Junction::unsignalized("E"));
    for k in 0..n {
        let id = format!("J{k}");
        let (a, b) = axis.remove(&id).unwrap_or_default();
        junctions.push(Junction {
            id,
            signalized: true,
            axis_a: a,
            axis_b: b,
            yellow: rng.random_range(1..=5) as f64,
            min_green: rng.random_range(1..=10) as f64,
            fixed_plan: None,
        });
    }
    let b = rng.random_range(2.0..6.0);
    Scenario {
        network: Network { junctions, edges },
        routes,
        duration: 200.0,
        vehicle: VehicleParams {
            a: rng.random_range(1.0..3.5),
            b,
            b_emergency: b + rng.random_range(1.0..5.0),
            length: rng.random_range(3.0..8.0),
            min_gap: rng.random_range(0.5..3.0),
            tau: rng.random_range(0.5..1.5),
        },
        seed,
        train: None,
    }
}

/// Runs `steps` steps of `scenario` under random requests and checks every
/// simulation invariant after each step.
pub fn check_invariants(scenario: &Scenario, seed: u64, steps: usize) -> Result<(), String> {
    let mut rng = rng_from(seed ^ 0x5eed);
    let schedule = spawn_schedule(scenario, &mut rng_from(seed));
    let total = schedule.len();
    let mut sim = Simulation::with_schedule(scenario, schedule).map_err(|e| e.to_string())?;
    let junctions: Vec<Junction> = sim.signalized_junctions().cloned().collect();
    let pairs: Vec<_> = junctions
        .iter()
        .map(|j| conflicting_pairs(j).expect("signalized"))
        .collect();
    let len = scenario.vehicle.length;
    let mut requests: Vec<AxisRequest> = vec![AxisRequest::AllRed; junctions.len()];
    for step in 0..steps {
        if sim.is_finished() {
            break;
        }
        for r in requests.iter_mut() {
            if rng.random_bool(0.2) {
                *r = AxisRequest::from_action(rng.random_range(0..3));
            }
        }
        let before = sim.signals().to_vec();
        let positions: HashMap<u64, (usize, f64)> = (0..sim.edge_count())
            .flat_map(|e| sim.lane(e).iter().map(move |v| (v.id, (e, v.position))))
            .collect();
        let assignment: Vec<_> = junctions
            .iter()
            .zip(&requests)
            .zip(&before)
            .map(|((j, &r), s)| apply_interlock(r, s, j))
            .collect();
        let ev = sim.step(&assignment).map_err(|e| format!("step {step}: {e}"))?;

        let accounted = sim.on_network() + sim.pending_count() + sim.arrived_total();
        if accounted != total {
            return Err(format!("step {step}: {accounted} vehicles accounted for, {total} scheduled"));
        }
        for e in 0..sim.edge_count() {
            let lane = sim.lane(e);
            for (lead, follow) in lane.iter().zip(lane.iter().skip(1)) {
                if lead.position - len - follow.position < -1e-9 {
                    return Err(format!(
                        "step {step}: vehicles {} and {} overlap on {}",
                        lead.id,
                        follow.id,
                        sim.edge_id(e)
                    ));
                }
            }
            for v in lane {
                if let Some(&(prev_edge, prev_pos)) = positions.get(&v.id) {
                    if prev_edge == e && v.position < prev_pos - 1e-9 {
                        return Err(format!("step {step}: vehicle {} moved backwards", v.id));
                    }
                }
            }
        }
        for (k, j) in junctions.iter().enumerate() {
            let s = sim.signals()[k];
            if let Some(v) = transition_violation(&before[k], &s, j) {
                return Err(format!("step {step}: junction {}: {v}", j.id));
            }
            for (ea, eb) in &pairs[k] {
                let color = |id: &str| sim.edge_index(id).and_then(|e| sim.edge_color(e));
                let non_red = |c: Option<Color>| c.is_some_and(|c| c != Color::Red);
                if non_red(color(ea)) && non_red(color(eb)) {
                    return Err(format!("step {step}: {ea} and {eb} both non-red"));
                }
            }
        }
        for t in &ev.transfers {
            if t.color.is_some_and(|c| c != Color::Green) {
                return Err(format!(
                    "step {step}: vehicle {} crossed from {} on {:?}",
                    t.vehicle,
                    sim.edge_id(t.from_edge),
                    t.color
                ));
            }
        }
    }
    Ok(())
}

/// A network with random architecture and random weights and biases.
pub fn random_network<R: Rng>(rng: &mut R) -> QNetwork {
    let depth = rng.random_range(1..=3usize);
    let mut arch = vec![rng.random_range(1..=8usize)];
    for _ in 0..depth {
        arch.push(rng.random_range(1..=10usize));
    }
    arch.push(rng.random_range(1..=4usize));
    let layers = arch
        .windows(2)
        .map(|w| Layer {
            rows: w[1],
            cols: w[0],
            w: (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b: (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect(),
        })
        .collect();
    QNetwork::from_layers(layers).expect("consistent shapes")
}

/// Weights first, then biases.
fn param_mut(layers: &mut [Layer], layer: usize, index: usize) -> &mut f64 {
    let l = &mut layers[layer];
    let n_w = l.w.len();
    if index < n_w {
        &mut l.w[index]
    } else {
        &mut l.b[index - n_w]
    }
}

fn loss_of(net: &QNetwork, x: &[f64], target: f64, action: usize) -> f64 {
    let q = net.forward(x).expect("input size")[action];
    (q - target) * (q - target)
}

/// Largest relative error between analytic and central-difference gradients
/// over `trials` random networks and inputs.
pub fn gradient_check(trials: usize, seed: u64) -> f64 {
    const EPS: f64 = 1e-5;
    let mut rng = rng_from(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let net = random_network(&mut rng);
        let x: Vec<f64> = (0..net.input_size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let action = rng.random_range(0..net.output_size());
        let target = rng.random_range(-2.0..2.0);
        let (_, grads) = net.backward(&x, target, action).expect("valid");
        let mut layers = net.layers().to_vec();
        for li in 0..layers.len() {
            let n_w = layers[li].w.len();
            for pi in 0..n_w + layers[li].b.len() {
                let orig = *param_mut(&mut layers, li, pi);
                *param_mut(&mut layers, li, pi) = orig + EPS;
                let up = loss_of(&QNetwork::from_layers(layers.clone()).unwrap(), &x, target, action);
                *param_mut(&mut layers, li, pi) = orig - EPS;
                let down = loss_of(&QNetwork::from_layers(layers.clone()).unwrap(), &x, target, action);
                *param_mut(&mut layers, li, pi) = orig;
                let numeric = (up - down) / (2.0 * EPS);
                let g = &grads.layers[li];
                let analytic = if pi < n_w { g.w[pi] } else { g.b[pi - n_w] };
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

/// Two-pass mean and sample standard deviation, plus min and max.
pub fn naive_stats(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (mean, sd, min, max)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Compares `aggregate` with the two-pass oracle on `cases` random inputs
/// spanning several magnitudes; returns the first mismatch.
pub fn aggregate_mismatch(cases: usize, seed: u64) -> Option<String> {
    let mut rng = rng_from(seed);
    for case in 0..cases {
        let n = rng.random_range(1..200);
        let scale = 10f64.powi(rng.random_range(-3..5));
        let offset = rng.random_range(-1000.0..1000.0);
        let xs: Vec<f64> = (0..n).map(|_| offset + scale * rng.random_range(-1.0..1.0)).collect();
        let s = aggregate(&xs).expect("non-empty");
        let (mean, sd, min, max) = naive_stats(&xs);
        if s.n != n || !rel_close(s.mean, mean, 1e-9) || (s.sd - sd).abs() > 1e-9 * sd.max(scale) || (s.min, s.max) != (min, max) {
            return Some(format!("case {case}: {s:?} vs mean {mean} sd {sd} min {min} max {max}"));
        }
    }
    None
}

pub fn tagged_transition(tag: f64) -> Transition {
    Transition {
        state: StateVector(vec![tag]),
        action: 0,
        reward: tag,
        next_state: StateVector(vec![tag]),
        terminal: false,
    }
}

/// Rewards (used as tags) left in a capacity-3 buffer after pushing 1..=4.
pub fn fifo_tags() -> (Vec<f64>, u64) {
    let mut buf = ReplayBuffer::new(3);
    for k in 1..=4 {
        buf.push(tagged_transition(k as f64));
    }
    (buf.iter().map(|t| t.reward).collect(), buf.inserted())
}

/// p-value of a chi-square goodness-of-fit test of 10⁵ replay samples from a
/// 10-element buffer against the uniform distribution.
pub fn replay_uniformity_p(seed: u64) -> f64 {
    let mut buf = ReplayBuffer::new(10);
    for k in 0..10 {
        buf.push(tagged_transition(k as f64));
    }
    let mut counts = [0u64; 10];
    let mut rng = rng_from(seed);
    for _ in 0..10_000 {
        for t in buf.sample(10, &mut rng).expect("full buffer") {
            counts[t.reward as usize] += 1;
        }
    }
    let expected = 10_000.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new(9.0).unwrap().cdf(stat)
}
