//! The learning agent: junction featurization, the green/red balance and
//! waiting-time reward, epsilon-greedy action selection, experience replay,
//! TD targets and target-network synchronisation.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::Color;
use crate::metrics::HALTING_SPEED;
use crate::qnet::{Adam, Gradients, QNetError, QNetwork};
use crate::rng::{rng_from, SimRng};
use crate::simcore::Simulation;

/// Number of agent actions: serve A, serve B, all red.
pub const ACTIONS: usize = 3;
/// Per-lane halt-time sum at which the wait feature saturates, s.
pub const WAIT_CAP: f64 = 300.0;
/// Phase time at which the time-in-phase feature saturates, s.
pub const PHASE_TIME_CAP: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// `0.2·sqrt(max(0, (Σgreen − Σred)² + W))`, radicand clamped at 0.
    Literal,
    /// `−0.2·|Σgreen − Σred| + W`.
    #[default]
    Balanced,
}

impl FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(RewardMode::Literal),
            "balanced" => Ok(RewardMode::Balanced),
            other => Err(format!("unknown reward mode {other:?} (literal|balanced)")),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::Literal => "literal",
            RewardMode::Balanced => "balanced",
        })
    }
}

/// Training hyperparameters. Every field has a default and can be set from the
/// scenario's `train` block or `--hp key=value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all decisions over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Gradient steps between target-network syncs.
    pub target_sync: u64,
    /// Transitions stored before the first gradient step.
    pub warmup: usize,
    /// Seconds between agent decisions.
    pub decision_interval: u32,
    pub hidden: Vec<usize>,
    pub reward_mode: RewardMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.95,
            buffer_capacity: 10_000,
            batch_size: 32,
            lr: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.7,
            target_sync: 500,
            warmup: 500,
            decision_interval: 5,
            hidden: vec![64, 64],
            reward_mode: RewardMode::Balanced,
        }
    }
}

impl Hyperparams {
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.gamma) {
            out.push(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if self.buffer_capacity == 0 {
            out.push("buffer_capacity must be ≥ 1".into());
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            out.push(format!(
                "batch_size must be in [1, buffer_capacity], got {}",
                self.batch_size
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("lr must be > 0, got {}", self.lr));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_decay_fraction", self.epsilon_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.target_sync == 0 {
            out.push("target_sync must be ≥ 1".into());
        }
        if self.decision_interval == 0 {
            out.push("decision_interval must be ≥ 1".into());
        }
        if self.hidden.contains(&0) {
            out.push("hidden layer sizes must be ≥ 1".into());
        }
        out
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse()
                .map_err(|_| format!("invalid value {v:?} for hyperparameter {key}"))
        }
        match key {
            "gamma" => self.gamma = parse(key, value)?,
            "buffer_capacity" => self.buffer_capacity = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epsilon_start" => self.epsilon_start = parse(key, value)?,
            "epsilon_end" => self.epsilon_end = parse(key, value)?,
            "epsilon_decay_fraction" => self.epsilon_decay_fraction = parse(key, value)?,
            "target_sync" => self.target_sync = parse(key, value)?,
            "warmup" => self.warmup = parse(key, value)?,
            "decision_interval" => self.decision_interval = parse(key, value)?,
            "reward_mode" => self.reward_mode = value.parse()?,
            "hidden" => {
                self.hidden = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            other => return Err(format!("unknown hyperparameter {other}")),
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over the first
    /// `epsilon_decay_fraction` of `total` decisions.
    pub fn epsilon(&self, decision: u64, total: u64) -> f64 {
        let horizon = self.epsilon_decay_fraction * total as f64;
        if horizon <= 0.0 {
            return self.epsilon_end;
        }
        let frac = (decision as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Observation of one signalized junction, every component in `[0, 1]`.
///
/// Per incoming lane (axis A lanes, then axis B): density, queue length and
/// summed halt time, each normalised; then a serving-A / serving-B /
/// transition one-hot and the normalised time in phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn dim(lanes: usize) -> usize {
        3 * lanes + 4
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Raw per-lane counts used by the featurizer and the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneView {
    pub color: Color,
    pub capacity: usize,
    pub vehicles: usize,
    pub halted: usize,
    /// Sum of the current halt times of vehicles on the lane, s.
    pub halt_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionView {
    pub lanes: Vec<LaneView>,
    pub a_color: Color,
    pub b_color: Color,
    pub elapsed: u32,
}

impl JunctionView {
    pub fn observe(sim: &Simulation, signal: usize) -> JunctionView {
        let s = sim.signals()[signal];
        let lanes = sim
            .signal_lanes(signal)
            .iter()
            .map(|&(edge, axis)| {
                let lane = sim.lane(edge);
                LaneView {
                    color: s.color(axis),
                    capacity: sim.lane_capacity(edge),
                    vehicles: lane.len(),
                    halted: lane.iter().filter(|v| v.speed < HALTING_SPEED).count(),
                    halt_time: lane.iter().map(|v| v.tracker.halt_time).sum(),
                }
            })
            .collect();
        JunctionView {
            lanes,
            a_color: s.a,
            b_color: s.b,
            elapsed: s.elapsed,
        }
    }

    pub fn green_lanes(&self) -> usize {
        self.lanes.iter().filter(|l| l.color == Color::Green).count()
    }

    pub fn red_lanes(&self) -> usize {
        self.lanes.iter().filter(|l| l.color == Color::Red).count()
    }

    /// Mean over incoming lanes of the lane's summed halt time.
    pub fn mean_wait(&self) -> f64 {
        if self.lanes.is_empty() {
            return 0.0;
        }
        self.lanes.iter().map(|l| l.halt_time).sum::<f64>() / self.lanes.len() as f64
    }
}

pub fn featurize(view: &JunctionView) -> StateVector {
    let mut x = Vec::with_capacity(StateVector::dim(view.lanes.len()));
    for l in &view.lanes {
        let cap = l.capacity.max(1) as f64;
        x.push((l.vehicles as f64 / cap).min(1.0));
        x.push((l.halted as f64 / cap).min(1.0));
        x.push(l.halt_time.min(WAIT_CAP) / WAIT_CAP);
    }
    let (serving_a, serving_b) = (
        view.a_color == Color::Green,
        view.b_color == Color::Green,
    );
    x.push(serving_a as u8 as f64);
    x.push(serving_b as u8 as f64);
    x.push((!serving_a && !serving_b) as u8 as f64);
    x.push((view.elapsed as f64).min(PHASE_TIME_CAP) / PHASE_TIME_CAP);
    StateVector(x)
}

/// Waiting-time term: 0 with no waiting, −0.5 below 5 s, −1 from 5 s up.
pub fn waiting_penalty(mean_wait: f64) -> f64 {
    if mean_wait <= 0.0 {
        0.0
    } else if mean_wait < 5.0 {
        -0.5
    } else {
        -1.0
    }
}

/// Reward from the green/red lane counts and the mean lane waiting time.
pub fn reward_from_counts(green: usize, red: usize, mean_wait: f64, mode: RewardMode) -> f64 {
    let diff = green as f64 - red as f64;
    let w = waiting_penalty(mean_wait);
    match mode {
        RewardMode::Literal => 0.2 * (diff * diff + w).max(0.0).sqrt(),
        RewardMode::Balanced => -0.2 * diff.abs() + w,
    }
}

pub fn reward(view: &JunctionView, mode: RewardMode) -> f64 {
    reward_from_counts(view.green_lanes(), view.red_lanes(), view.mean_wait(), mode)
}

/// Epsilon-greedy choice; ties go to the lowest index.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..q.len());
    }
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateVector,
    pub terminal: bool,
}

#[derive(Debug, Error, PartialEq)]
#[error("cannot sample {requested} transitions from a buffer holding {available}")]
pub struct Underfilled {
    pub requested: usize,
    pub available: usize,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
            inserted: 0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>, Underfilled> {
        if self.items.len() < batch || self.items.is_empty() {
            return Err(Underfilled {
                requested: batch,
                available: self.items.len(),
            });
        }
        Ok((0..batch)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}

pub fn td_target(t: &Transition, target_net: &QNetwork, gamma: f64) -> Result<f64, QNetError> {
    if t.terminal || gamma == 0.0 {
        return Ok(t.reward);
    }
    let q = target_net.forward(t.next_state.as_slice())?;
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(t.reward + gamma * best)
}

pub fn sync_target(online: &QNetwork) -> QNetwork {
    online.clone()
}

/// One independently learning agent for one signalized junction.
#[derive(Debug, Clone)]
pub struct Agent {
    pub junction: String,
    pub online: QNetwork,
    pub target: QNetwork,
    pub buffer: ReplayBuffer,
    adam: Adam,
    rng: SimRng,
    gradient_steps: u64,
}

impl Agent {
    pub fn new(junction: impl Into<String>, lanes: usize, hp: &Hyperparams, seed: u64) -> Result<Agent, QNetError> {
        let mut rng = rng_from(seed);
        let mut arch = vec![StateVector::dim(lanes)];
        arch.extend(&hp.hidden);
        arch.push(ACTIONS);
        let online = QNetwork::xavier(&arch, &mut rng)?;
        Ok(Agent {
            junction: junction.into(),
            target: sync_target(&online),
            adam: Adam::new(&online, hp.lr),
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            online,
            rng,
            gradient_steps: 0,
        })
    }

    pub fn act(&mut self, state: &StateVector, epsilon: f64) -> Result<usize, QNetError> {
        let q = self.online.forward(state.as_slice())?;
        Ok(select_action(&q, epsilon, &mut self.rng))
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    /// One minibatch update once the buffer holds `warmup` transitions.
    /// Returns the mean squared TD error of the batch.
    pub fn learn(&mut self, hp: &Hyperparams) -> Result<Option<f64>, QNetError> {
        if self.buffer.len() < hp.warmup.max(hp.batch_size) {
            return Ok(None);
        }
        let batch = self
            .buffer
            .sample(hp.batch_size, &mut self.rng)
            .expect("buffer holds at least one batch");
        let mut grads = Gradients::zeros_like(&self.online);
        let mut loss = 0.0;
        for t in &batch {
            let y = td_target(t, &self.target, hp.gamma)?;
            loss += self
                .online
                .accumulate_gradient(t.state.as_slice(), y, t.action, &mut grads)?;
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        self.adam.step(&mut self.online, &grads)?;
        self.gradient_steps += 1;
        if self.gradient_steps % hp.target_sync == 0 {
            self.target = sync_target(&self.online);
        }
        Ok(Some(loss / n))
    }
}
