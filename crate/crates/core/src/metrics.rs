//! Per-vehicle metric accounting and Table-style aggregation
//! (mean / sample SD / min / max per metric).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed below which a vehicle counts as halted, m/s.
pub const HALTING_SPEED: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("cannot summarize an empty sample")]
    Empty,
    #[error("percent change from a zero baseline is undefined")]
    ZeroBaseline,
}

/// Running counters carried by each vehicle while it is on the network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VehicleTracker {
    pub waiting: f64,
    pub time_loss: f64,
    pub emergency_stops: u32,
    /// Consecutive time halted, reset whenever the vehicle moves.
    pub halt_time: f64,
    pub in_emergency: bool,
}

impl VehicleTracker {
    /// Updates the emergency state; returns true on onset.
    pub fn note_emergency(&mut self, emergency: bool) -> bool {
        let onset = emergency && !self.in_emergency;
        if onset {
            self.emergency_stops += 1;
        }
        self.in_emergency = emergency;
        onset
    }
}

/// Accumulates one step of waiting time and time loss.
pub fn record_step(tracker: &mut VehicleTracker, speed: f64, allowed_speed: f64, dt: f64) {
    if speed < HALTING_SPEED {
        tracker.waiting += dt;
        tracker.halt_time += dt;
    } else {
        tracker.halt_time = 0.0;
    }
    if allowed_speed > 0.0 {
        tracker.time_loss += (1.0 - speed / allowed_speed).clamp(0.0, 1.0) * dt;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub waiting_time: f64,
    pub time_loss: f64,
    pub emergency_stops: u32,
    pub depart_delay: f64,
}

/// Final metrics of one vehicle. `actual_depart` is `None` for vehicles that
/// were never inserted; they are charged the delay up to `duration` and the
/// returned flag is set.
pub fn finalize(
    tracker: &VehicleTracker,
    scheduled_depart: f64,
    actual_depart: Option<f64>,
    duration: f64,
) -> (VehicleMetrics, bool) {
    let (delay, flagged) = match actual_depart {
        Some(t) => (t - scheduled_depart, false),
        None => (duration - scheduled_depart, true),
    };
    (
        VehicleMetrics {
            waiting_time: tracker.waiting,
            time_loss: tracker.time_loss,
            emergency_stops: tracker.emergency_stops,
            depart_delay: delay.max(0.0),
        },
        flagged,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl StatSummary {
    /// Placeholder for a metric with no observations.
    pub fn empty() -> Self {
        StatSummary {
            mean: 0.0,
            sd: 0.0,
            min: 0.0,
            max: 0.0,
            n: 0,
        }
    }
}

/// Mean, sample standard deviation (n − 1), min and max.
pub fn aggregate(values: &[f64]) -> Result<StatSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    // Welford keeps the variance accurate for large offsets.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
        min = min.min(x);
        max = max.max(x);
    }
    let n = values.len();
    let sd = if n < 2 {
        0.0
    } else {
        (m2 / (n - 1) as f64).max(0.0).sqrt()
    };
    Ok(StatSummary {
        mean: mean.clamp(min, max),
        sd,
        min,
        max,
        n,
    })
}

/// Like [`aggregate`] but returns [`StatSummary::empty`] for no values.
pub fn aggregate_or_empty(values: &[f64]) -> StatSummary {
    aggregate(values).unwrap_or_else(|_| StatSummary::empty())
}

/// Relative decrease from `before` to `after`, in percent.
pub fn percent_change(before: f64, after: f64) -> Result<f64, StatsError> {
    if before == 0.0 {
        return Err(StatsError::ZeroBaseline);
    }
    Ok(100.0 * (before - after) / before)
}

/// The four reported metrics, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    WaitingTime,
    TimeLoss,
    EmergencyStops,
    DepartDelay,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::WaitingTime,
        Metric::TimeLoss,
        Metric::EmergencyStops,
        Metric::DepartDelay,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::WaitingTime => "W.T.",
            Metric::TimeLoss => "T.L.",
            Metric::EmergencyStops => "E.S.",
            Metric::DepartDelay => "D.D.",
        }
    }

    pub fn of(self, m: &VehicleMetrics) -> f64 {
        match self {
            Metric::WaitingTime => m.waiting_time,
            Metric::TimeLoss => m.time_loss,
            Metric::EmergencyStops => m.emergency_stops as f64,
            Metric::DepartDelay => m.depart_delay,
        }
    }
}

/// One summary per metric, in [`Metric::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummaries {
    pub waiting_time: StatSummary,
    pub time_loss: StatSummary,
    pub emergency_stops: StatSummary,
    pub depart_delay: StatSummary,
}

impl MetricSummaries {
    pub fn from_columns(columns: [&[f64]; 4]) -> Self {
        MetricSummaries {
            waiting_time: aggregate_or_empty(columns[0]),
            time_loss: aggregate_or_empty(columns[1]),
            emergency_stops: aggregate_or_empty(columns[2]),
            depart_delay: aggregate_or_empty(columns[3]),
        }
    }

    pub fn get(&self, metric: Metric) -> &StatSummary {
        match metric {
            Metric::WaitingTime => &self.waiting_time,
            Metric::TimeLoss => &self.time_loss,
            Metric::EmergencyStops => &self.emergency_stops,
            Metric::DepartDelay => &self.depart_delay,
        }
    }
}
