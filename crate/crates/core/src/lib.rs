//! Simulation and learning toolkit for adaptive traffic-signal control.
//!
//! A discrete-time microscopic traffic simulator drives signalized junctions
//! whose lights are set either by a fixed-time plan or by independent deep
//! Q-learning agents, one per junction.

pub mod controllers;
pub mod dqn;
pub mod harness;
pub mod metrics;
pub mod netmodel;
pub mod qnet;
pub mod report;
pub mod rng;
pub mod simcore;

pub use controllers::{AxisRequest, Color, FixedTimeController, SignalController, SignalState};
pub use dqn::{Hyperparams, RewardMode};
pub use harness::{HarnessError, PolicyWeights};
pub use netmodel::{load_scenario, Network, Scenario};
pub use qnet::QNetwork;
pub use report::RunReport;
pub use simcore::Simulation;
