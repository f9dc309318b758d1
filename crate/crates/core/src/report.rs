//! Run reports: per-vehicle rows, per-episode totals, Table-1 style summaries
//! and side-by-side comparisons.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{aggregate_or_empty, percent_change, Metric, MetricSummaries, StatSummary};
use crate::simcore::FinishedVehicle;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("reports are not comparable: {0}")]
    Mismatch(String),
    #[error("malformed report: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One row of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRow {
    pub id: u64,
    pub wt: f64,
    pub tl: f64,
    pub es: u32,
    pub dd: f64,
    pub seed: u64,
    pub episode: usize,
}

/// Metric totals of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTotals {
    pub episode: usize,
    pub seed: u64,
    pub vehicles: usize,
    pub arrived: usize,
    pub never_inserted: usize,
    pub wt: f64,
    pub tl: f64,
    pub es: u64,
    pub dd: f64,
}

impl EpisodeTotals {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::WaitingTime => self.wt,
            Metric::TimeLoss => self.tl,
            Metric::EmergencyStops => self.es as f64,
            Metric::DepartDelay => self.dd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub controller: String,
    pub scenario_id: String,
    pub seeds: Vec<u64>,
    /// Pooled over every vehicle of every episode.
    pub summary: MetricSummaries,
    /// Over the per-episode totals.
    pub episode_summary: MetricSummaries,
    pub episodes: Vec<EpisodeTotals>,
    pub vehicles: Vec<VehicleRow>,
    /// No vehicle was scheduled in any episode.
    pub zero_vehicle: bool,
}

impl RunReport {
    /// Builds a report from per-episode results, given in the order of `seeds`.
    pub fn build(
        controller: &str,
        scenario_id: &str,
        seeds: &[u64],
        results: &[Vec<FinishedVehicle>],
    ) -> RunReport {
        let mut vehicles = Vec::new();
        let mut episodes = Vec::new();
        for (episode, (&seed, finished)) in seeds.iter().zip(results).enumerate() {
            let mut t = EpisodeTotals {
                episode,
                seed,
                vehicles: finished.len(),
                arrived: 0,
                never_inserted: 0,
                wt: 0.0,
                tl: 0.0,
                es: 0,
                dd: 0.0,
            };
            for f in finished {
                let m = &f.metrics;
                t.arrived += f.arrived as usize;
                t.never_inserted += f.flagged as usize;
                t.wt += m.waiting_time;
                t.tl += m.time_loss;
                t.es += m.emergency_stops as u64;
                t.dd += m.depart_delay;
                vehicles.push(VehicleRow {
                    id: f.id,
                    wt: m.waiting_time,
                    tl: m.time_loss,
                    es: m.emergency_stops,
                    dd: m.depart_delay,
                    seed,
                    episode,
                });
            }
            episodes.push(t);
        }
        let column = |f: fn(&VehicleRow) -> f64| vehicles.iter().map(f).collect::<Vec<_>>();
        let summary = MetricSummaries::from_columns([
            &column(|v| v.wt),
            &column(|v| v.tl),
            &column(|v| v.es as f64),
            &column(|v| v.dd),
        ]);
        let ep_column = |m: Metric| episodes.iter().map(|e| e.get(m)).collect::<Vec<_>>();
        let episode_summary = MetricSummaries {
            waiting_time: aggregate_or_empty(&ep_column(Metric::WaitingTime)),
            time_loss: aggregate_or_empty(&ep_column(Metric::TimeLoss)),
            emergency_stops: aggregate_or_empty(&ep_column(Metric::EmergencyStops)),
            depart_delay: aggregate_or_empty(&ep_column(Metric::DepartDelay)),
        };
        RunReport {
            controller: controller.to_string(),
            scenario_id: scenario_id.to_string(),
            seeds: seeds.to_vec(),
            zero_vehicle: vehicles.is_empty(),
            summary,
            episode_summary,
            episodes,
            vehicles,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<RunReport, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    /// `report.csv`: one row per vehicle.
    pub fn vehicles_csv(&self) -> Result<String, ReportError> {
        write_rows(&self.vehicles)
    }

    pub fn episodes_csv(&self) -> Result<String, ReportError> {
        write_rows(&self.episodes)
    }
}

/// Serializes rows as CSV with a header line.
pub fn write_rows<T: Serialize>(rows: &[T]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ReportError::Csv(csv::Error::from(e.into_error())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub const STATISTICS: [&str; 4] = ["Mean", "SD", "Min", "Max"];

fn statistic(s: &StatSummary, name: &str) -> f64 {
    match name {
        "Mean" => s.mean,
        "SD" => s.sd,
        "Min" => s.min,
        _ => s.max,
    }
}

/// Table-1 layout: one row per statistic, one column per controller × metric.
pub fn summary_csv(reports: &[&RunReport]) -> String {
    let mut out = String::from("Statistic");
    for r in reports {
        for m in Metric::ALL {
            out.push_str(&format!(",{} {}", r.controller, m.label()));
        }
    }
    out.push('\n');
    for stat in STATISTICS {
        out.push_str(stat);
        for r in reports {
            for m in Metric::ALL {
                out.push_str(&format!(",{:.4}", statistic(r.summary.get(m), stat)));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub baseline_mean: f64,
    pub candidate_mean: f64,
    /// Signed change of the candidate relative to the baseline, percent;
    /// `None` when the baseline mean is zero.
    pub change_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario_id: String,
    pub seeds: Vec<u64>,
    pub baseline: String,
    pub candidate: String,
    /// Per-vehicle means.
    pub vehicle_means: Vec<ComparisonRow>,
    /// Means of per-episode totals.
    pub episode_means: Vec<ComparisonRow>,
}

fn change(before: f64, after: f64) -> Option<f64> {
    percent_change(before, after).ok().map(|p| -p)
}

fn rows(a: &MetricSummaries, b: &MetricSummaries) -> Vec<ComparisonRow> {
    Metric::ALL
        .iter()
        .map(|&m| {
            let (x, y) = (a.get(m).mean, b.get(m).mean);
            ComparisonRow {
                metric: m.label().to_string(),
                baseline_mean: x,
                candidate_mean: y,
                change_pct: change(x, y),
            }
        })
        .collect()
}

/// Side-by-side comparison of `candidate` against `baseline`.
pub fn compare(baseline: &RunReport, candidate: &RunReport) -> Result<Comparison, ReportError> {
    if baseline.scenario_id != candidate.scenario_id {
        return Err(ReportError::Mismatch(format!(
            "scenario {} vs {}",
            baseline.scenario_id, candidate.scenario_id
        )));
    }
    if baseline.seeds != candidate.seeds {
        return Err(ReportError::Mismatch(format!(
            "seeds {:?} vs {:?}",
            baseline.seeds, candidate.seeds
        )));
    }
    Ok(Comparison {
        scenario_id: baseline.scenario_id.clone(),
        seeds: baseline.seeds.clone(),
        baseline: baseline.controller.clone(),
        candidate: candidate.controller.clone(),
        vehicle_means: rows(&baseline.summary, &candidate.summary),
        episode_means: rows(&baseline.episode_summary, &candidate.episode_summary),
    })
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# {} vs {} on {} ({} seeds)\n",
            self.candidate,
            self.baseline,
            self.scenario_id,
            self.seeds.len()
        );
        for (title, rows) in [
            ("Per-vehicle means", &self.vehicle_means),
            ("Per-episode totals", &self.episode_means),
        ] {
            out.push_str(&format!(
                "\n## {title}\n\n| Metric | {} | {} | Change |\n|---|---:|---:|---:|\n",
                self.baseline, self.candidate
            ));
            for r in rows {
                let pct = r
                    .change_pct
                    .map_or_else(|| "n/a".to_string(), |p| format!("{p:+.4}%"));
                out.push_str(&format!(
                    "| {} | {:.4} | {:.4} | {} |\n",
                    r.metric, r.baseline_mean, r.candidate_mean, pct
                ));
            }
        }
        out
    }
}
