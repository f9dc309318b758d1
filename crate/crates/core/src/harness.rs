//! Training loop, evaluation protocol and report emission.
//!
//! A training episode is one full scenario run. Every `decision_interval`
//! seconds each agent observes its junction, picks an action, and the action's
//! serving request is held (through the interlock) until the next decision.
//! The reward of a decision is the sum of the per-second rewards over its
//! interval.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{apply_interlock, AxisRequest, FixedTimeController, SignalController};
use crate::dqn::{self, Agent, Hyperparams, JunctionView, RewardMode, StateVector, ACTIONS};
use crate::netmodel::{load_scenario, Junction, Scenario, ScenarioError};
use crate::qnet::{QNetError, QNetwork};
use crate::report::{self, Comparison, ReportError, RunReport};
use crate::rng::{derive_seed, STREAM_AGENT, STREAM_EPISODE, STREAM_EVAL};
use crate::simcore::{FinishedVehicle, SimError, Simulation, StepEvents};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    QNet(#[from] QNetError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("non-finite loss in episode {episode} at junction {junction}")]
    NonFiniteLoss { episode: usize, junction: String },
    #[error("weights do not fit the scenario: {0}")]
    WeightsMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl HarnessError {
    /// Short machine-readable error category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Io { .. } => "io",
            HarnessError::Scenario(ScenarioError::Parse(_)) => "scenario_parse",
            HarnessError::Scenario(ScenarioError::Invalid(_)) => "scenario_invalid",
            HarnessError::Sim(_) => "simulation",
            HarnessError::QNet(_) => "weights",
            HarnessError::Report(_) => "report",
            HarnessError::NonFiniteLoss { .. } => "non_finite_loss",
            HarnessError::WeightsMismatch(_) => "weights_mismatch",
            HarnessError::Config(_) => "config",
        }
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, HarnessError> {
    Ok(load_scenario(&read(path)?)?)
}

/// Scenario identifier used in reports: the file stem.
pub fn scenario_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentWeights {
    pub junction: String,
    /// A Q-network weights document.
    pub network: serde_json::Value,
}

/// Trained weights for every signalized junction of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyWeights {
    pub format_version: u32,
    pub decision_interval: u32,
    pub reward_mode: RewardMode,
    pub agents: Vec<AgentWeights>,
}

impl PolicyWeights {
    pub fn from_agents(agents: &[Agent], hp: &Hyperparams) -> PolicyWeights {
        PolicyWeights {
            format_version: WEIGHTS_FORMAT_VERSION,
            decision_interval: hp.decision_interval,
            reward_mode: hp.reward_mode,
            agents: agents
                .iter()
                .map(|a| AgentWeights {
                    junction: a.junction.clone(),
                    network: a.online.to_value(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }

    /// Parses a weights file and checks every embedded network.
    pub fn from_json(text: &str) -> Result<PolicyWeights, HarnessError> {
        let w: PolicyWeights =
            serde_json::from_str(text).map_err(|e| QNetError::Parse(e.to_string()))?;
        if w.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(QNetError::Parse(format!(
                "unsupported weights format_version {}",
                w.format_version
            ))
            .into());
        }
        if w.decision_interval == 0 {
            return Err(QNetError::Parse("decision_interval must be ≥ 1".into()).into());
        }
        w.networks()?;
        Ok(w)
    }

    pub fn networks(&self) -> Result<Vec<(String, QNetwork)>, QNetError> {
        self.agents
            .iter()
            .map(|a| Ok((a.junction.clone(), QNetwork::from_value(a.network.clone())?)))
            .collect()
    }
}

/// Applies each junction's request through the interlock and steps the sim.
pub fn advance(
    sim: &mut Simulation,
    junctions: &[Junction],
    requests: &[AxisRequest],
) -> Result<StepEvents, SimError> {
    let assignment: Vec<_> = junctions
        .iter()
        .zip(requests)
        .zip(sim.signals())
        .map(|((j, &r), s)| apply_interlock(r, s, j))
        .collect();
    sim.step(&assignment)
}

pub fn observe(sim: &Simulation, signal: usize) -> StateVector {
    dqn::featurize(&JunctionView::observe(sim, signal))
}

/// One row of `curve.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub epsilon: f64,
    pub mean_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: PolicyWeights,
    pub curve: Vec<CurveRow>,
}

/// Trains one agent per signalized junction for `episodes` runs.
pub fn train_scenario(
    scenario: &Scenario,
    hp: &Hyperparams,
    episodes: usize,
    seed: u64,
) -> Result<TrainOutcome, HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::Config("episodes must be ≥ 1".into()));
    }
    let problems = hp.check();
    if !problems.is_empty() {
        return Err(HarnessError::Config(problems.join("; ")));
    }
    let probe = Simulation::with_schedule(scenario, Vec::new())?;
    let junctions: Vec<Junction> = probe.signalized_junctions().cloned().collect();
    let mut agents = junctions
        .iter()
        .enumerate()
        .map(|(k, j)| {
            Agent::new(
                j.id.clone(),
                probe.signal_lanes(k).len(),
                hp,
                derive_seed(seed, STREAM_AGENT, k as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let interval = hp.decision_interval as usize;
    let steps = scenario.duration.ceil() as usize;
    let per_episode = steps.div_ceil(interval) as u64;
    let total = per_episode * episodes as u64;
    let mut decision = 0u64;
    let mut curve = Vec::with_capacity(episodes);

    for episode in 0..episodes {
        let mut sim = Simulation::new(scenario, derive_seed(seed, STREAM_EPISODE, episode as u64))?;
        let mut states: Vec<StateVector> = (0..agents.len()).map(|k| observe(&sim, k)).collect();
        let mut episode_return = 0.0;
        let mut losses = Vec::new();
        let mut epsilon = hp.epsilon(decision, total);
        while !sim.is_finished() {
            epsilon = hp.epsilon(decision, total);
            let actions = agents
                .iter_mut()
                .zip(&states)
                .map(|(a, s)| a.act(s, epsilon))
                .collect::<Result<Vec<_>, _>>()?;
            let requests: Vec<AxisRequest> =
                actions.iter().map(|&a| AxisRequest::from_action(a)).collect();
            let mut rewards = vec![0.0; agents.len()];
            for _ in 0..interval {
                if sim.is_finished() {
                    break;
                }
                advance(&mut sim, &junctions, &requests)?;
                for (k, r) in rewards.iter_mut().enumerate() {
                    *r += dqn::reward(&JunctionView::observe(&sim, k), hp.reward_mode);
                }
            }
            let terminal = sim.is_finished();
            for (k, agent) in agents.iter_mut().enumerate() {
                let next_state = observe(&sim, k);
                agent.buffer.push(dqn::Transition {
                    state: std::mem::replace(&mut states[k], next_state.clone()),
                    action: actions[k],
                    reward: rewards[k],
                    next_state,
                    terminal,
                });
                if let Some(loss) = agent.learn(hp)? {
                    if !loss.is_finite() {
                        return Err(HarnessError::NonFiniteLoss {
                            episode,
                            junction: agent.junction.clone(),
                        });
                    }
                    losses.push(loss);
                }
            }
            episode_return += rewards.iter().sum::<f64>();
            decision += 1;
        }
        curve.push(CurveRow {
            episode: episode + 1,
            episode_return,
            epsilon,
            mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
        });
    }
    Ok(TrainOutcome {
        weights: PolicyWeights::from_agents(&agents, hp),
        curve,
    })
}

pub fn curve_csv(rows: &[CurveRow]) -> Result<String, HarnessError> {
    Ok(report::write_rows(rows)?)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub scenario: PathBuf,
    pub episodes: usize,
    pub seed: u64,
    pub reward_mode: Option<RewardMode>,
    pub weights_out: PathBuf,
    /// Defaults to `curve.csv` next to the weights file.
    pub curve_out: Option<PathBuf>,
    /// `key=value` hyperparameter overrides, applied last.
    pub overrides: Vec<(String, String)>,
}

impl TrainConfig {
    pub fn hyperparams(&self, scenario: &Scenario) -> Result<Hyperparams, HarnessError> {
        let mut hp = scenario.train.clone().unwrap_or_default();
        if let Some(mode) = self.reward_mode {
            hp.reward_mode = mode;
        }
        for (k, v) in &self.overrides {
            hp.set(k, v).map_err(HarnessError::Config)?;
        }
        Ok(hp)
    }

    pub fn curve_path(&self) -> PathBuf {
        self.curve_out.clone().unwrap_or_else(|| {
            self.weights_out
                .parent()
                .unwrap_or(Path::new(""))
                .join("curve.csv")
        })
    }
}

/// Trains from a scenario file and writes the weights and learning curve.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome, HarnessError> {
    if config.weights_out.as_os_str().is_empty() || config.scenario.as_os_str().is_empty() {
        return Err(HarnessError::Config("paths must be non-empty".into()));
    }
    let scenario = load_scenario_file(&config.scenario)?;
    let hp = config.hyperparams(&scenario)?;
    let outcome = train_scenario(&scenario, &hp, config.episodes, config.seed)?;
    write(&config.weights_out, &outcome.weights.to_json())?;
    write(&config.curve_path(), &curve_csv(&outcome.curve)?)?;
    Ok(outcome)
}

/// Greedy controller backed by trained networks; holds each decision for the
/// trained decision interval.
#[derive(Debug, Clone)]
pub struct DqnController {
    networks: Vec<QNetwork>,
    interval: u64,
    held: Vec<AxisRequest>,
}

impl DqnController {
    pub fn new(weights: &PolicyWeights, sim: &Simulation) -> Result<DqnController, HarnessError> {
        let nets = weights.networks()?;
        let ids: Vec<&str> = sim.signalized_junctions().map(|j| j.id.as_str()).collect();
        if nets.len() != ids.len() {
            return Err(HarnessError::WeightsMismatch(format!(
                "{} agents for {} signalized junctions",
                nets.len(),
                ids.len()
            )));
        }
        let mut networks = Vec::with_capacity(nets.len());
        for (k, ((junction, net), id)) in nets.into_iter().zip(&ids).enumerate() {
            if junction != *id {
                return Err(HarnessError::WeightsMismatch(format!(
                    "agent {k} is for junction {junction}, scenario has {id}"
                )));
            }
            let d_in = StateVector::dim(sim.signal_lanes(k).len());
            if net.input_size() != d_in || net.output_size() != ACTIONS {
                return Err(HarnessError::WeightsMismatch(format!(
                    "junction {id}: network is {:?}, scenario needs {d_in} inputs and {ACTIONS} outputs",
                    net.arch()
                )));
            }
            networks.push(net);
        }
        Ok(DqnController {
            held: vec![AxisRequest::Serve(crate::netmodel::Axis::A); networks.len()],
            networks,
            interval: weights.decision_interval as u64,
        })
    }
}

impl SignalController for DqnController {
    fn name(&self) -> &str {
        "DQN"
    }

    fn requests(&mut self, sim: &Simulation) -> Vec<AxisRequest> {
        if (sim.clock() as u64) % self.interval == 0 {
            for (k, net) in self.networks.iter().enumerate() {
                let q = net
                    .forward(observe(sim, k).as_slice())
                    .expect("input size checked at construction");
                let mut rng = crate::rng::rng_from(0);
                self.held[k] = AxisRequest::from_action(dqn::select_action(&q, 0.0, &mut rng));
            }
        }
        self.held.clone()
    }
}

/// Runs one full scenario under a controller.
pub fn run_episode(
    scenario: &Scenario,
    demand_seed: u64,
    controller: &mut dyn SignalController,
) -> Result<Vec<FinishedVehicle>, HarnessError> {
    let mut sim = Simulation::new(scenario, demand_seed)?;
    let junctions: Vec<Junction> = sim.signalized_junctions().cloned().collect();
    while !sim.is_finished() {
        let requests = controller.requests(&sim);
        advance(&mut sim, &junctions, &requests)?;
    }
    Ok(sim.finish())
}

#[derive(Debug, Clone)]
pub enum ControllerSpec {
    FixedTime,
    Dqn(PolicyWeights),
}

impl ControllerSpec {
    fn build(&self, sim: &Simulation) -> Result<Box<dyn SignalController + Send>, HarnessError> {
        Ok(match self {
            ControllerSpec::FixedTime => Box::new(FixedTimeController::new(sim)),
            ControllerSpec::Dqn(w) => Box::new(DqnController::new(w, sim)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::FixedTime => "Rule-based",
            ControllerSpec::Dqn(_) => "DQN",
        }
    }
}

/// Demand seed of evaluation seed `seed`.
pub fn eval_demand_seed(seed: u64) -> u64 {
    derive_seed(seed, STREAM_EVAL, 0)
}

/// Evaluates a controller on every seed (in ascending order) and aggregates.
pub fn evaluate_scenario(
    scenario: &Scenario,
    scenario_id: &str,
    spec: &ControllerSpec,
    seeds: &[u64],
) -> Result<RunReport, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("at least one evaluation seed is required".into()));
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    if seeds.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::Config("evaluation seeds must be distinct".into()));
    }
    // Fail on weight/scenario mismatch before spawning work.
    spec.build(&Simulation::with_schedule(scenario, Vec::new())?)?;
    let results = seeds
        .par_iter()
        .map(|&seed| {
            let demand = eval_demand_seed(seed);
            let probe = Simulation::with_schedule(scenario, Vec::new())?;
            let mut controller = spec.build(&probe)?;
            run_episode(scenario, demand, controller.as_mut())
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(RunReport::build(spec.name(), scenario_id, &seeds, &results))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerChoice {
    FixedTime,
    Dqn { weights: PathBuf },
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub scenario: PathBuf,
    pub controller: ControllerChoice,
    pub seeds: Vec<u64>,
    /// Output directory for `report.csv`, `summary.csv`, `episodes.csv` and
    /// `report.json`.
    pub out: PathBuf,
}

pub fn evaluate(config: &EvalConfig) -> Result<RunReport, HarnessError> {
    let scenario = load_scenario_file(&config.scenario)?;
    let spec = match &config.controller {
        ControllerChoice::FixedTime => ControllerSpec::FixedTime,
        ControllerChoice::Dqn { weights } => ControllerSpec::Dqn(PolicyWeights::from_json(&read(weights)?)?),
    };
    let report = evaluate_scenario(&scenario, &scenario_id(&config.scenario), &spec, &config.seeds)?;
    write_report(&report, &config.out)?;
    Ok(report)
}

pub fn write_report(report: &RunReport, dir: &Path) -> Result<(), HarnessError> {
    write(&dir.join("report.csv"), &report.vehicles_csv()?)?;
    write(&dir.join("episodes.csv"), &report.episodes_csv()?)?;
    write(&dir.join("summary.csv"), &report::summary_csv(&[report]))?;
    write(&dir.join("report.json"), &report.to_json())?;
    Ok(())
}

/// Reads a report from a `report.json` file or a directory containing one.
pub fn read_report(path: &Path) -> Result<RunReport, HarnessError> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    Ok(RunReport::from_json(&read(&file)?)?)
}

/// Compares two evaluation outputs and writes `summary.csv`,
/// `comparison.json` and `comparison.md` into `out`.
pub fn compare_files(baseline: &Path, candidate: &Path, out: &Path) -> Result<Comparison, HarnessError> {
    let a = read_report(baseline)?;
    let b = read_report(candidate)?;
    let cmp = report::compare(&a, &b)?;
    write(&out.join("summary.csv"), &report::summary_csv(&[&a, &b]))?;
    write(&out.join("comparison.json"), &cmp.to_json())?;
    write(&out.join("comparison.md"), &cmp.to_markdown())?;
    Ok(cmp)
}
