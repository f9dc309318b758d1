//! Deterministic discrete-time microscopic simulation.
//!
//! Every step advances the clock by one second. Vehicles follow a Krauss-style
//! safe-speed rule (driver imperfection 0) on single-lane edges. A junction
//! axis that is not green acts as a standing leader of zero length at the end
//! of its incoming edges. The update is synchronous: every vehicle picks its
//! new speed from its leader's state at the start of the step, then all
//! vehicles move. Junction transfers happen after all movement.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::controllers::{Color, SignalAssignment, SignalState};
use crate::metrics::{self, VehicleMetrics, VehicleTracker};
use crate::netmodel::{self, Axis, Junction, Scenario, VehicleParams};

/// Step length in seconds.
pub const DT: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("assignment has {got} signal states, network has {expected} signalized junctions")]
    AssignmentSize { expected: usize, got: usize },
    #[error("junction {junction}: axis A {a} and axis B {b} are both non-red")]
    Interlock {
        junction: String,
        a: Color,
        b: Color,
    },
}

/// Collision-free speed behind a leader moving at `leader_speed` with `gap`
/// meters of free space.
pub fn safe_speed(leader_speed: f64, gap: f64, params: &VehicleParams) -> f64 {
    let bt = params.b * params.tau;
    let gap = gap.max(0.0);
    let leader_speed = leader_speed.max(0.0);
    (-bt + (bt * bt + leader_speed * leader_speed + 2.0 * params.b * gap).sqrt()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deceleration {
    pub decel: f64,
    pub emergency: bool,
}

/// Deceleration needed to go from `v_prev` to `v_target` within `dt`; it is an
/// emergency when it exceeds the comfortable deceleration.
pub fn required_decel(v_prev: f64, v_target: f64, dt: f64, params: &VehicleParams) -> Deceleration {
    let decel = ((v_prev - v_target) / dt).max(0.0);
    Deceleration {
        decel,
        emergency: decel > params.b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Departure {
    pub time: f64,
    pub route: usize,
}

/// Poisson arrivals for every route over `[0, duration)`, sorted by time.
/// Inter-arrival times are drawn by inverse-CDF from one shared stream, route
/// by route.
pub fn spawn_schedule<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Vec<Departure> {
    let mut out = Vec::new();
    for (route, r) in scenario.routes.iter().enumerate() {
        if r.rate <= 0.0 {
            continue;
        }
        let mut t = 0.0;
        loop {
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / r.rate;
            if t >= scenario.duration {
                break;
            }
            out.push(Departure { time: t, route });
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.route.cmp(&b.route)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    pub route: usize,
    /// Index of the current edge within the route.
    pub leg: usize,
    /// Front bumper, meters from the edge start.
    pub position: f64,
    pub speed: f64,
    pub scheduled_depart: f64,
    pub actual_depart: Option<f64>,
    pub tracker: VehicleTracker,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub vehicle: u64,
    pub from_edge: usize,
    pub to_edge: usize,
    /// Color shown to `from_edge` when crossing; `None` at unsignalized junctions.
    pub color: Option<Color>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepEvents {
    /// (vehicle id, clock) at onset.
    pub emergency_stops: Vec<(u64, f64)>,
    pub arrivals: Vec<u64>,
    /// (vehicle id, actual depart).
    pub insertions: Vec<(u64, f64)>,
    pub transfers: Vec<Transfer>,
}

/// Final accounting for one scheduled vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct FinishedVehicle {
    pub id: u64,
    pub route: usize,
    pub metrics: VehicleMetrics,
    pub arrived: bool,
    /// Never inserted before the end of the run.
    pub flagged: bool,
}

#[derive(Debug)]
struct EdgeInfo {
    id: String,
    length: f64,
    speed_limit: f64,
    capacity: usize,
    /// (signal index, axis) if this edge feeds a signalized junction.
    signal: Option<(usize, Axis)>,
}

#[derive(Debug)]
struct Topology {
    edges: Vec<EdgeInfo>,
    edge_index: HashMap<String, usize>,
    routes: Vec<Vec<usize>>,
    signalized: Vec<Junction>,
    /// Incoming edges per signalized junction, axis A then axis B.
    signal_lanes: Vec<Vec<(usize, Axis)>>,
}

impl Topology {
    fn build(scenario: &Scenario) -> Topology {
        let net = &scenario.network;
        let signalized: Vec<Junction> = net.signalized().cloned().collect();
        let edge_index: HashMap<String, usize> = net
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();
        let edges = net
            .edges
            .iter()
            .map(|e| EdgeInfo {
                id: e.id.clone(),
                length: e.length,
                speed_limit: e.speed_limit,
                capacity: scenario.vehicle.lane_capacity(e.length),
                signal: signalized.iter().enumerate().find_map(|(si, j)| {
                    (j.id == e.to).then(|| j.axis_of(&e.id).map(|ax| (si, ax))).flatten()
                }),
            })
            .collect();
        let routes = scenario
            .routes
            .iter()
            .map(|r| r.edges.iter().map(|e| edge_index[e]).collect())
            .collect();
        let signal_lanes = signalized
            .iter()
            .map(|j| {
                j.axis_a
                    .iter()
                    .map(|e| (edge_index[e], Axis::A))
                    .chain(j.axis_b.iter().map(|e| (edge_index[e], Axis::B)))
                    .collect()
            })
            .collect();
        Topology {
            edges,
            edge_index,
            routes,
            signalized,
            signal_lanes,
        }
    }
}

/// What bounds the frontmost part of a vehicle's path this step.
#[derive(Debug, Clone, Copy)]
struct Obstacle {
    leader_speed: f64,
    /// Free space for the safe-speed rule (minimum gap subtracted).
    gap: f64,
    /// Distance the vehicle may travel without overlapping.
    room: f64,
}

/// A running simulation of one scenario.
#[derive(Debug)]
pub struct Simulation {
    scenario: Arc<Scenario>,
    topo: Arc<Topology>,
    steps: u64,
    /// Per edge, front (largest position) first.
    lanes: Vec<VecDeque<Vehicle>>,
    /// Not yet inserted, by scheduled departure.
    pending: VecDeque<Vehicle>,
    signals: SignalAssignment,
    finished: Vec<FinishedVehicle>,
    inserted_total: usize,
    arrived_total: usize,
}

impl Simulation {
    /// Starts a run whose demand is drawn from `seed`.
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, SimError> {
        let mut rng = crate::rng::rng_from(seed);
        let schedule = spawn_schedule(scenario, &mut rng);
        Self::with_schedule(scenario, schedule)
    }

    /// Starts a run with an explicit departure schedule.
    pub fn with_schedule(scenario: &Scenario, mut schedule: Vec<Departure>) -> Result<Self, SimError> {
        let violations = netmodel::validate_scenario(scenario);
        if !violations.is_empty() {
            return Err(SimError::InvalidScenario(violations));
        }
        schedule.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.route.cmp(&b.route)));
        let topo = Topology::build(scenario);
        let pending = schedule
            .iter()
            .filter(|d| d.route < topo.routes.len())
            .enumerate()
            .map(|(i, d)| Vehicle {
                id: i as u64,
                route: d.route,
                leg: 0,
                position: 0.0,
                speed: 0.0,
                scheduled_depart: d.time,
                actual_depart: None,
                tracker: VehicleTracker::default(),
            })
            .collect();
        let signals = vec![SignalState::serving(Axis::A); topo.signalized.len()];
        let mut sim = Simulation {
            scenario: Arc::new(scenario.clone()),
            lanes: (0..topo.edges.len()).map(|_| VecDeque::new()).collect(),
            topo: Arc::new(topo),
            steps: 0,
            pending,
            signals,
            finished: Vec::new(),
            inserted_total: 0,
            arrived_total: 0,
        };
        let mut ev = StepEvents::default();
        sim.insert_due(&mut ev);
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Simulated seconds elapsed.
    pub fn clock(&self) -> f64 {
        self.steps as f64 * DT
    }

    pub fn is_finished(&self) -> bool {
        self.clock() >= self.scenario.duration
    }

    pub fn signals(&self) -> &[SignalState] {
        &self.signals
    }

    pub fn signalized_junctions(&self) -> impl Iterator<Item = &Junction> {
        self.topo.signalized.iter()
    }

    pub fn signalized_count(&self) -> usize {
        self.topo.signalized.len()
    }

    /// Incoming edges (index, axis) of signalized junction `signal`.
    pub fn signal_lanes(&self, signal: usize) -> &[(usize, Axis)] {
        &self.topo.signal_lanes[signal]
    }

    pub fn edge_count(&self) -> usize {
        self.topo.edges.len()
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.topo.edge_index.get(id).copied()
    }

    pub fn edge_id(&self, edge: usize) -> &str {
        &self.topo.edges[edge].id
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        self.topo.edges[edge].length
    }

    pub fn edge_speed_limit(&self, edge: usize) -> f64 {
        self.topo.edges[edge].speed_limit
    }

    pub fn lane_capacity(&self, edge: usize) -> usize {
        self.topo.edges[edge].capacity
    }

    /// Vehicles on an edge, frontmost first.
    pub fn lane(&self, edge: usize) -> &VecDeque<Vehicle> {
        &self.lanes[edge]
    }

    /// Color shown to vehicles at the end of `edge`; `None` if the edge does
    /// not feed a signalized junction.
    pub fn edge_color(&self, edge: usize) -> Option<Color> {
        self.topo.edges[edge]
            .signal
            .map(|(si, axis)| self.signals[si].color(axis))
    }

    pub fn route_edges(&self, route: usize) -> &[usize] {
        &self.topo.routes[route]
    }

    pub fn on_network(&self) -> usize {
        self.lanes.iter().map(VecDeque::len).sum()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn inserted_total(&self) -> usize {
        self.inserted_total
    }

    pub fn arrived_total(&self) -> usize {
        self.arrived_total
    }

    /// Advances one step under `assignment`. An assignment that shows two
    /// conflicting axes non-red is rejected and the state is left untouched.
    pub fn step(&mut self, assignment: &[SignalState]) -> Result<StepEvents, SimError> {
        if assignment.len() != self.topo.signalized.len() {
            return Err(SimError::AssignmentSize {
                expected: self.topo.signalized.len(),
                got: assignment.len(),
            });
        }
        for (s, j) in assignment.iter().zip(&self.topo.signalized) {
            if !s.is_safe() {
                return Err(SimError::Interlock {
                    junction: j.id.clone(),
                    a: s.a,
                    b: s.b,
                });
            }
        }
        self.signals.clear();
        self.signals.extend_from_slice(assignment);

        let mut ev = StepEvents::default();
        self.move_vehicles(&mut ev);
        self.transfer_vehicles(&mut ev);
        self.repair_overlaps();
        self.steps += 1;
        self.insert_due(&mut ev);
        Ok(ev)
    }

    fn obstacle_ahead(&self, edge: usize, index: usize) -> Option<Obstacle> {
        let p = &self.scenario.vehicle;
        let lane = &self.lanes[edge];
        let v = &lane[index];
        if index > 0 {
            let l = &lane[index - 1];
            return Some(Obstacle {
                leader_speed: l.speed,
                gap: l.position - p.length - p.min_gap - v.position,
                room: l.position - p.length - v.position,
            });
        }
        let route = &self.topo.routes[v.route];
        if v.leg + 1 >= route.len() {
            return None;
        }
        let info = &self.topo.edges[edge];
        let to_end = info.length - v.position;
        if let Some(color) = self.edge_color(edge) {
            if color != Color::Green {
                return Some(Obstacle {
                    leader_speed: 0.0,
                    gap: to_end,
                    room: to_end,
                });
            }
        }
        let next = route[v.leg + 1];
        self.lanes[next]
            .back()
            .filter(|tail| tail.id != v.id)
            .map(|tail| Obstacle {
                leader_speed: tail.speed,
                gap: to_end + tail.position - p.length - p.min_gap,
                room: to_end + tail.position - p.length,
            })
    }

    fn move_vehicles(&mut self, ev: &mut StepEvents) {
        let p = self.scenario.vehicle.clone();
        let clock = self.clock();
        // Every vehicle reacts to its leader's state from the previous step.
        let mut plan = Vec::with_capacity(self.lanes.len());
        for edge in 0..self.lanes.len() {
            let limit = self.topo.edges[edge].speed_limit;
            let speeds: Vec<(f64, bool)> = (0..self.lanes[edge].len())
                .map(|i| {
                    let v = &self.lanes[edge][i];
                    let mut target = limit.min(v.speed + p.a * DT);
                    let mut room = f64::INFINITY;
                    if let Some(o) = self.obstacle_ahead(edge, i) {
                        room = o.room.max(0.0);
                        target = target.min(safe_speed(o.leader_speed, o.gap, &p)).min(room / DT);
                    }
                    let d = required_decel(v.speed, target, DT, &p);
                    let new_speed = target
                        .max(v.speed - p.b_emergency * DT)
                        .min(room / DT)
                        .max(0.0);
                    (new_speed, d.emergency)
                })
                .collect();
            plan.push(speeds);
        }
        for (edge, speeds) in plan.into_iter().enumerate() {
            let limit = self.topo.edges[edge].speed_limit;
            for (v, (new_speed, emergency)) in self.lanes[edge].iter_mut().zip(speeds) {
                if v.tracker.note_emergency(emergency) {
                    ev.emergency_stops.push((v.id, clock));
                }
                metrics::record_step(&mut v.tracker, new_speed, limit, DT);
                v.speed = new_speed;
                v.position += new_speed * DT;
            }
        }
    }

    fn transfer_vehicles(&mut self, ev: &mut StepEvents) {
        let clock = self.clock();
        let p = self.scenario.vehicle.clone();
        for edge in 0..self.lanes.len() {
            while let Some(front) = self.lanes[edge].front() {
                let route = &self.topo.routes[front.route];
                let last = front.leg + 1 == route.len();
                let length = self.topo.edges[edge].length;
                if !(front.position > length || (last && front.position >= length)) {
                    break;
                }
                let mut veh = self.lanes[edge].pop_front().expect("front exists");
                let mut cur = edge;
                loop {
                    let info = &self.topo.edges[cur];
                    let route = &self.topo.routes[veh.route];
                    if veh.leg + 1 == route.len() {
                        if veh.position >= info.length {
                            self.arrive(veh, ev);
                        } else {
                            self.lanes[cur].push_back(veh);
                        }
                        break;
                    }
                    if veh.position <= info.length {
                        self.lanes[cur].push_back(veh);
                        break;
                    }
                    let next = route[veh.leg + 1];
                    let color = self.edge_color(cur);
                    let overshoot = veh.position - info.length;
                    let blocked = color.is_some_and(|c| c != Color::Green)
                        || self.lanes[next]
                            .back()
                            .is_some_and(|t| overshoot > t.position - p.length);
                    if blocked {
                        veh.position = info.length;
                        if veh.tracker.note_emergency(veh.speed / DT > p.b) {
                            ev.emergency_stops.push((veh.id, clock));
                        }
                        veh.speed = 0.0;
                        if cur == edge {
                            self.lanes[cur].push_front(veh);
                        } else {
                            self.lanes[cur].push_back(veh);
                        }
                        break;
                    }
                    ev.transfers.push(Transfer {
                        vehicle: veh.id,
                        from_edge: cur,
                        to_edge: next,
                        color,
                    });
                    veh.position = overshoot;
                    veh.leg += 1;
                    veh.speed = veh.speed.min(self.topo.edges[next].speed_limit);
                    cur = next;
                }
            }
        }
    }

    /// Pulls followers back behind a leader whose transfer was refused.
    fn repair_overlaps(&mut self) {
        let len = self.scenario.vehicle.length;
        for lane in &mut self.lanes {
            for i in 1..lane.len() {
                let (lead_pos, lead_speed) = (lane[i - 1].position, lane[i - 1].speed);
                let f = &mut lane[i];
                if f.position > lead_pos - len {
                    f.position = lead_pos - len;
                    f.speed = f.speed.min(lead_speed);
                }
            }
        }
    }

    fn arrive(&mut self, veh: Vehicle, ev: &mut StepEvents) {
        ev.arrivals.push(veh.id);
        self.arrived_total += 1;
        let (m, flagged) = metrics::finalize(
            &veh.tracker,
            veh.scheduled_depart,
            veh.actual_depart,
            self.scenario.duration,
        );
        self.finished.push(FinishedVehicle {
            id: veh.id,
            route: veh.route,
            metrics: m,
            arrived: true,
            flagged,
        });
    }

    fn insert_due(&mut self, ev: &mut StepEvents) {
        let clock = self.clock();
        let p = &self.scenario.vehicle;
        let need = p.length + p.min_gap;
        let mut waiting = VecDeque::new();
        while self
            .pending
            .front()
            .is_some_and(|v| v.scheduled_depart <= clock)
        {
            let mut veh = self.pending.pop_front().expect("front exists");
            let edge = self.topo.routes[veh.route][0];
            let lane = &mut self.lanes[edge];
            let admits = lane.back().is_none_or(|t| t.position - p.length >= need);
            if admits {
                veh.actual_depart = Some(clock);
                ev.insertions.push((veh.id, clock));
                lane.push_back(veh);
                self.inserted_total += 1;
            } else {
                waiting.push_back(veh);
            }
        }
        while let Some(v) = waiting.pop_back() {
            self.pending.push_front(v);
        }
    }

    /// Final metrics for every scheduled vehicle: arrivals first, then those
    /// still on the network, then never-inserted ones; each group by id.
    pub fn finish(self) -> Vec<FinishedVehicle> {
        let duration = self.scenario.duration;
        let mut out = self.finished;
        out.sort_by_key(|f| f.id);
        let mut rest: Vec<FinishedVehicle> = self
            .lanes
            .into_iter()
            .flatten()
            .chain(self.pending)
            .map(|v| {
                let (m, flagged) =
                    metrics::finalize(&v.tracker, v.scheduled_depart, v.actual_depart, duration);
                FinishedVehicle {
                    id: v.id,
                    route: v.route,
                    metrics: m,
                    arrived: false,
                    flagged,
                }
            })
            .collect();
        rest.sort_by_key(|f| (f.flagged, f.id));
        out.extend(rest);
        out
    }
}
