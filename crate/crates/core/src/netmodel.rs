//! Road network and scenario data model, scenario file I/O and structural
//! validation.
//!
//! A scenario file is a JSON document:
//!
//! ```json
//! {
//!   "network": { "junctions": [...], "edges": [...] },
//!   "routes": [{ "edges": ["w_in", "e_out"], "rate": 0.1 }],
//!   "duration": 1000,
//!   "vehicle": { "a": 2.6, "b": 4.5, "b_emergency": 9.0, "length": 5.0, "min_gap": 2.5, "tau": 1.0 },
//!   "seed": 42
//! }
//! ```
//!
//! See `docs/scenario-format.md` for the full schema.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::FixedTimePlan;
use crate::dqn::Hyperparams;

/// Minimum edge length in meters.
pub const MIN_EDGE_LENGTH: f64 = 10.0;
/// Upper bound on edge speed limits in m/s.
pub const MAX_SPEED_LIMIT: f64 = 50.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Error)]
#[error("junction {0} is not signalized")]
pub struct NotSignalized(pub String);

/// One of the two conflicting signal groups of an intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    A,
    B,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::A => Axis::B,
            Axis::B => Axis::A,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::A => f.write_str("A"),
            Axis::B => f.write_str("B"),
        }
    }
}

fn default_yellow() -> f64 {
    3.0
}

fn default_min_green() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Junction {
    pub id: String,
    #[serde(default)]
    pub signalized: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axis_a: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axis_b: Vec<String>,
    /// Yellow duration in seconds.
    #[serde(default = "default_yellow")]
    pub yellow: f64,
    /// Minimum green duration in seconds.
    #[serde(default = "default_min_green")]
    pub min_green: f64,
    /// Fixed-time baseline plan; defaults to 30 s / 3 s / 30 s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_plan: Option<FixedTimePlan>,
}

impl Junction {
    pub fn unsignalized(id: impl Into<String>) -> Self {
        Junction {
            id: id.into(),
            signalized: false,
            axis_a: Vec::new(),
            axis_b: Vec::new(),
            yellow: default_yellow(),
            min_green: default_min_green(),
            fixed_plan: None,
        }
    }

    pub fn axis_edges(&self, axis: Axis) -> &[String] {
        match axis {
            Axis::A => &self.axis_a,
            Axis::B => &self.axis_b,
        }
    }

    /// The axis an incoming edge belongs to, if any.
    pub fn axis_of(&self, edge: &str) -> Option<Axis> {
        if self.axis_a.iter().any(|e| e == edge) {
            Some(Axis::A)
        } else if self.axis_b.iter().any(|e| e == edge) {
            Some(Axis::B)
        } else {
            None
        }
    }

    pub fn plan(&self) -> FixedTimePlan {
        self.fixed_plan.clone().unwrap_or_default()
    }

    /// Incoming edges in feature order: axis A first, then axis B.
    pub fn incoming(&self) -> impl Iterator<Item = &String> {
        self.axis_a.iter().chain(self.axis_b.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Meters.
    pub length: f64,
    /// m/s.
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub junctions: Vec<Junction>,
    pub edges: Vec<Edge>,
}

impl Network {
    pub fn junction(&self, id: &str) -> Option<&Junction> {
        self.junctions.iter().find(|j| j.id == id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    /// Ids of the signal-controlled junctions, in file order.
    pub fn signalized_ids(&self) -> Vec<&str> {
        self.junctions
            .iter()
            .filter(|j| j.signalized)
            .map(|j| j.id.as_str())
            .collect()
    }

    pub fn signalized(&self) -> impl Iterator<Item = &Junction> {
        self.junctions.iter().filter(|j| j.signalized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub edges: Vec<String>,
    /// Vehicles per second.
    pub rate: f64,
}

/// Vehicle dynamics parameters shared by every vehicle in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Maximum acceleration, m/s².
    pub a: f64,
    /// Comfortable deceleration, m/s².
    pub b: f64,
    /// Emergency deceleration, m/s².
    pub b_emergency: f64,
    pub length: f64,
    pub min_gap: f64,
    /// Reaction time, s.
    pub tau: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            a: 2.6,
            b: 4.5,
            b_emergency: 9.0,
            length: 5.0,
            min_gap: 2.5,
            tau: 1.0,
        }
    }
}

impl VehicleParams {
    /// Number of vehicles that fit on a lane of the given length.
    pub fn lane_capacity(&self, length: f64) -> usize {
        ((length / (self.length + self.min_gap)).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub network: Network,
    pub routes: Vec<Route>,
    /// Simulated seconds per run.
    pub duration: f64,
    pub vehicle: VehicleParams,
    pub seed: u64,
    /// Optional training hyperparameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<Hyperparams>,
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text)?;
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(violations))
    }
}

/// Checks the structural invariants of a network. Returns one description per
/// violation; an empty list means the network is well formed.
pub fn validate(network: &Network) -> Vec<String> {
    let mut out = Vec::new();

    let mut junction_ids = BTreeSet::new();
    for j in &network.junctions {
        if !junction_ids.insert(j.id.as_str()) {
            out.push(format!("duplicate junction id {}", j.id));
        }
    }
    let mut edge_ids = BTreeSet::new();
    for e in &network.edges {
        if !edge_ids.insert(e.id.as_str()) {
            out.push(format!("duplicate edge id {}", e.id));
        }
    }

    for e in &network.edges {
        for (end, jid) in [("from", &e.from), ("to", &e.to)] {
            if !junction_ids.contains(jid.as_str()) {
                out.push(format!("edge {}: {end} junction {jid} does not exist", e.id));
            }
        }
        // NaN fails both comparisons, so it is reported too.
        if !(e.length >= MIN_EDGE_LENGTH) {
            out.push(format!(
                "edge {}: length ≥ {MIN_EDGE_LENGTH} m required, got {}",
                e.id, e.length
            ));
        }
        if !(e.speed_limit > 0.0 && e.speed_limit <= MAX_SPEED_LIMIT) {
            out.push(format!(
                "edge {}: speed limit must be in (0, {MAX_SPEED_LIMIT}] m/s, got {}",
                e.id, e.speed_limit
            ));
        }
    }

    for j in &network.junctions {
        if !j.signalized {
            if !j.axis_a.is_empty() || !j.axis_b.is_empty() {
                out.push(format!("junction {}: axes given but not signalized", j.id));
            }
            continue;
        }
        if j.axis_a.is_empty() {
            out.push(format!("junction {}: axis A is empty", j.id));
        }
        if j.axis_b.is_empty() {
            out.push(format!("junction {}: axis B is empty", j.id));
        }
        let mut seen = BTreeSet::new();
        for (axis, eid) in j
            .axis_a
            .iter()
            .map(|e| (Axis::A, e))
            .chain(j.axis_b.iter().map(|e| (Axis::B, e)))
        {
            if !seen.insert(eid.as_str()) {
                out.push(format!(
                    "junction {}: edge {eid} appears more than once in its axes",
                    j.id
                ));
            }
            match network.edge(eid) {
                None => out.push(format!(
                    "junction {}: axis {axis} edge {eid} does not exist",
                    j.id
                )),
                Some(e) if e.to != j.id => out.push(format!(
                    "junction {}: axis {axis} edge {eid} does not end at this junction",
                    j.id
                )),
                Some(_) => {}
            }
        }
        for e in network.edges.iter().filter(|e| e.to == j.id) {
            if !seen.contains(e.id.as_str()) {
                out.push(format!(
                    "junction {}: incoming edge {} belongs to neither axis",
                    j.id, e.id
                ));
            }
        }
        if !(j.yellow >= 1.0) {
            out.push(format!("junction {}: yellow duration must be ≥ 1 s", j.id));
        }
        if !(j.min_green >= 1.0) {
            out.push(format!("junction {}: min green must be ≥ 1 s", j.id));
        }
        if let Some(plan) = &j.fixed_plan {
            if let Err(e) = plan.check() {
                out.push(format!("junction {}: {e}", j.id));
            }
        }
    }
    out
}

/// Validates the network plus demand and vehicle parameters.
pub fn validate_scenario(scenario: &Scenario) -> Vec<String> {
    let network = &scenario.network;
    let mut out = validate(network);

    for (i, route) in scenario.routes.iter().enumerate() {
        if route.edges.is_empty() {
            out.push(format!("route {i}: empty edge sequence"));
        }
        let mut prev: Option<&Edge> = None;
        for eid in &route.edges {
            match network.edge(eid) {
                None => {
                    out.push(format!("route {i}: unknown edge {eid}"));
                    prev = None;
                }
                Some(e) => {
                    if let Some(p) = prev {
                        if p.to != e.from {
                            out.push(format!(
                                "route {i}: edge {} does not continue from {}",
                                e.id, p.id
                            ));
                        }
                    }
                    prev = Some(e);
                }
            }
        }
        if !(route.rate >= 0.0 && route.rate.is_finite()) {
            out.push(format!("route {i}: rate must be ≥ 0, got {}", route.rate));
        }
    }

    if !is_route_graph_connected(scenario) {
        out.push("routes do not form a connected network".to_string());
    }

    if !(scenario.duration > 0.0 && scenario.duration.is_finite()) {
        out.push(format!("duration must be > 0, got {}", scenario.duration));
    }
    let v = &scenario.vehicle;
    if !(v.a > 0.0 && v.a.is_finite()) {
        out.push(format!("vehicle: a must be > 0, got {}", v.a));
    }
    if !(v.b > 0.0 && v.b.is_finite()) {
        out.push(format!("vehicle: b must be > 0, got {}", v.b));
    }
    if !(v.b_emergency > v.b && v.b_emergency.is_finite()) {
        out.push(format!(
            "vehicle: b_emergency must exceed b, got {} ≤ {}",
            v.b_emergency, v.b
        ));
    }
    if !(v.length > 0.0 && v.length.is_finite()) {
        out.push(format!("vehicle: length must be > 0, got {}", v.length));
    }
    if !(v.min_gap >= 0.0 && v.min_gap.is_finite()) {
        out.push(format!("vehicle: min_gap must be ≥ 0, got {}", v.min_gap));
    }
    if !(v.tau > 0.0 && v.tau.is_finite()) {
        out.push(format!("vehicle: tau must be > 0, got {}", v.tau));
    }
    if let Some(hp) = &scenario.train {
        out.extend(hp.check().into_iter().map(|e| format!("train: {e}")));
    }
    out
}

/// Weak connectivity of the junction graph spanned by route edges.
fn is_route_graph_connected(scenario: &Scenario) -> bool {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for route in &scenario.routes {
        for eid in &route.edges {
            if let Some(e) = scenario.network.edge(eid) {
                adj.entry(&e.from).or_default().push(&e.to);
                adj.entry(&e.to).or_default().push(&e.from);
            }
        }
    }
    let Some(&start) = adj.keys().next() else {
        return true;
    };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for &m in &adj[n] {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen.len() == adj.len()
}

/// All cross-axis pairs of incoming edges (A × B) at a signalized junction.
pub fn conflicting_pairs(junction: &Junction) -> Result<BTreeSet<(String, String)>, NotSignalized> {
    if !junction.signalized {
        return Err(NotSignalized(junction.id.clone()));
    }
    Ok(junction
        .axis_a
        .iter()
        .flat_map(|a| junction.axis_b.iter().map(move |b| (a.clone(), b.clone())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(id: &str, from: &str, to: &str) -> Edge {
        Edge {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            length: 200.0,
            speed_limit: 13.9,
        }
    }

    fn single() -> Scenario {
        let mut c = Junction::unsignalized("C");
        c.signalized = true;
        c.axis_a = vec!["w_in".into(), "e_in".into()];
        c.axis_b = vec!["n_in".into(), "s_in".into()];
        let mut junctions = vec![c];
        let mut edges = Vec::new();
        let mut routes = Vec::new();
        for (src, dst) in [("w", "e"), ("e", "w"), ("n", "s"), ("s", "n")] {
            junctions.push(Junction::unsignalized(format!("{src}_src")));
            junctions.push(Junction::unsignalized(format!("{dst}_dst")));
            edges.push(edge(&format!("{src}_in"), &format!("{src}_src"), "C"));
            edges.push(edge(&format!("{dst}_out"), "C", &format!("{dst}_dst")));
            routes.push(Route {
                edges: vec![format!("{src}_in"), format!("{dst}_out")],
                rate: 0.1,
            });
        }
        Scenario {
            network: Network { junctions, edges },
            routes,
            duration: 1000.0,
            vehicle: VehicleParams::default(),
            seed: 1,
            train: None,
        }
    }

    #[test]
    fn well_formed_network_has_no_violations() {
        let s = single();
        assert_eq!(validate(&s.network), Vec::<String>::new());
        assert!(validate_scenario(&s).is_empty());
    }

    #[test]
    fn empty_axis_b_is_one_violation() {
        let mut s = single();
        s.network.junctions[0].axis_b.clear();
        s.network.edges.retain(|e| e.id != "n_in" && e.id != "s_in");
        let v = validate(&s.network);
        assert_eq!(v, vec!["junction C: axis B is empty".to_string()]);
    }

    #[test]
    fn duplicate_edge_id_is_one_violation() {
        let mut s = single();
        let dup = s.network.edges[1].clone();
        s.network.edges.push(dup);
        let v = validate(&s.network);
        assert_eq!(v, vec!["duplicate edge id e_out".to_string()]);
    }

    #[test]
    fn unknown_route_edge_is_named() {
        let mut s = single();
        s.routes[0].edges[1] = "x9".into();
        let v = validate_scenario(&s);
        assert!(v.iter().any(|m| m.contains("x9")), "{v:?}");
    }

    #[test]
    fn negative_length_is_reported() {
        let mut s = single();
        s.network.edges[0].length = -5.0;
        let v = validate(&s.network);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("length ≥ 10"));
    }

    #[test]
    fn non_contiguous_route_is_reported() {
        let mut s = single();
        s.routes[0].edges = vec!["w_in".into(), "n_in".into()];
        let v = validate_scenario(&s);
        assert!(v.iter().any(|m| m.contains("does not continue")), "{v:?}");
    }

    #[test]
    fn conflicting_pairs_is_cartesian_product() {
        let mut j = Junction::unsignalized("J");
        j.signalized = true;
        j.axis_a = vec!["e1".into(), "e2".into()];
        j.axis_b = vec!["e3".into(), "e4".into()];
        let pairs = conflicting_pairs(&j).unwrap();
        let expected: BTreeSet<_> = [("e1", "e3"), ("e1", "e4"), ("e2", "e3"), ("e2", "e4")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(pairs, expected);

        j.axis_a = vec!["e1".into()];
        j.axis_b = vec!["e2".into()];
        assert_eq!(
            conflicting_pairs(&j).unwrap(),
            BTreeSet::from([("e1".to_string(), "e2".to_string())])
        );
    }

    #[test]
    fn conflicting_pairs_rejects_unsignalized() {
        assert!(conflicting_pairs(&Junction::unsignalized("J")).is_err());
    }

    #[test]
    fn lane_capacity_counts_whole_vehicles() {
        let p = VehicleParams::default();
        assert_eq!(p.lane_capacity(200.0), 26);
        assert_eq!(p.lane_capacity(90.0), 12);
    }

    #[test]
    fn disconnected_routes_are_reported() {
        let mut s = single();
        s.network.junctions.push(Junction::unsignalized("p"));
        s.network.junctions.push(Junction::unsignalized("q"));
        s.network.edges.push(edge("pq", "p", "q"));
        s.routes.push(Route {
            edges: vec!["pq".into()],
            rate: 0.1,
        });
        let v = validate_scenario(&s);
        assert!(v.iter().any(|m| m.contains("connected")), "{v:?}");
    }
}
