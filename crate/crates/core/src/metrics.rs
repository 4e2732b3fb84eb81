//! Interval aggregation, violation percentages and controller overhead accounting.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::broker::ResponseRecord;
use crate::goals::{violates, GoalsModel, QualityAttribute};
use crate::mode::Mode;

/// Incremental arithmetic mean. A constant sequence yields that constant exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunningMean {
    count: u64,
    mean: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }
}

/// Values the goals are checked against for one observation window.
///
/// Energy and cost goals are budgets for the whole run, so the window's
/// energy and cost are projected to a run total before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observations {
    pub response_time: Option<f64>,
    pub energy_kwh: f64,
    pub cost_usd: f64,
    pub throughput: f64,
    /// Run duration over window duration.
    pub projection: f64,
}

impl Observations {
    pub fn get(&self, attribute: QualityAttribute) -> Option<f64> {
        match attribute {
            QualityAttribute::ResponseTime => self.response_time,
            QualityAttribute::Energy => Some(self.energy_kwh * self.projection),
            QualityAttribute::Cost => Some(self.cost_usd * self.projection),
            QualityAttribute::Throughput => Some(self.throughput),
        }
    }

    /// Number of goals violated by these observations (goals without data are skipped).
    pub fn count_violations(&self, goals: &GoalsModel) -> u32 {
        goals
            .goals
            .iter()
            .filter(|g| {
                self.get(g.attribute)
                    .is_some_and(|x| violates(g.objective, g.constraint_value, x))
            })
            .count() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Monitoring,
    Detecting,
    Deciding,
    Executing,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Monitoring, Phase::Detecting, Phase::Deciding, Phase::Executing];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Monitoring => "monitoring",
            Phase::Detecting => "detecting",
            Phase::Deciding => "deciding",
            Phase::Executing => "executing",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Controller wall-clock time per phase, plus invocation counts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OverheadLedger {
    seconds: [f64; 4],
    invocations: [u64; 4],
}

impl OverheadLedger {
    /// Every invocation adds a strictly positive amount, even below timer resolution.
    pub fn add(&mut self, phase: Phase, elapsed: Duration) {
        let secs = elapsed.as_secs_f64().max(1e-9);
        self.seconds[phase.index()] += secs;
        self.invocations[phase.index()] += 1;
    }

    pub fn add_seconds(&mut self, phase: Phase, seconds: f64) {
        assert!(seconds >= 0.0, "overhead cannot be negative");
        self.seconds[phase.index()] += seconds;
        self.invocations[phase.index()] += 1;
    }

    pub fn seconds(&self, phase: Phase) -> f64 {
        self.seconds[phase.index()]
    }

    pub fn invocations(&self, phase: Phase) -> u64 {
        self.invocations[phase.index()]
    }

    pub fn total_invocations(&self) -> u64 {
        self.invocations.iter().sum()
    }

    pub fn merge(&mut self, other: &OverheadLedger) {
        for i in 0..4 {
            self.seconds[i] += other.seconds[i];
            self.invocations[i] += other.invocations[i];
        }
    }
}

/// Sum of all phases, in seconds.
pub fn overhead_total(ledger: &OverheadLedger) -> f64 {
    ledger.seconds.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServiceInterval {
    pub avg_response: Option<f64>,
    pub completed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub interval_index: usize,
    pub per_service: BTreeMap<u32, ServiceInterval>,
    pub avg_response: Option<f64>,
    pub energy_kwh: f64,
    pub cost_usd: f64,
    pub completed: u64,
    /// Goals violated by this interval's observations.
    pub violations: u32,
    /// Adaptation decisions executed at the end of this interval.
    pub decisions: u32,
}

/// Collects response records and cuts them into per-interval metrics.
#[derive(Debug, Clone, Default)]
pub struct MetricsCollector {
    records: Vec<ResponseRecord>,
    intervals: Vec<IntervalMetrics>,
    current_all: RunningMean,
    current_by_service: BTreeMap<u32, RunningMean>,
    last_energy: f64,
    last_cost: f64,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_completion(&mut self, record: ResponseRecord) {
        self.current_all.push(record.response_time);
        self.current_by_service
            .entry(record.service_type_id)
            .or_default()
            .push(record.response_time);
        self.records.push(record);
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn intervals(&self) -> &[IntervalMetrics] {
        &self.intervals
    }

    /// Closes the current interval. `total_energy` and `total_cost` are the
    /// datacenter totals at the boundary; the interval gets their deltas.
    pub fn record_interval(
        &mut self,
        interval_index: usize,
        total_energy: f64,
        total_cost: f64,
        goals: &GoalsModel,
        projection: f64,
        decisions: u32,
    ) -> &IntervalMetrics {
        let energy_kwh = total_energy - self.last_energy;
        let cost_usd = total_cost - self.last_cost;
        self.last_energy = total_energy;
        self.last_cost = total_cost;

        let per_service = std::mem::take(&mut self.current_by_service)
            .into_iter()
            .map(|(s, m)| {
                (
                    s,
                    ServiceInterval {
                        avg_response: m.mean(),
                        completed: m.count(),
                    },
                )
            })
            .collect();
        let all = std::mem::take(&mut self.current_all);
        let obs = Observations {
            response_time: all.mean(),
            energy_kwh,
            cost_usd,
            throughput: all.count() as f64,
            projection,
        };
        self.intervals.push(IntervalMetrics {
            interval_index,
            per_service,
            avg_response: all.mean(),
            energy_kwh,
            cost_usd,
            completed: all.count(),
            violations: obs.count_violations(goals),
            decisions,
        });
        self.intervals.last().expect("just pushed")
    }
}

/// Share of records whose response time exceeds `constraint`, per service type.
/// `None` marks a service without records.
pub fn violation_percentage(records: &[ResponseRecord], constraint: f64) -> BTreeMap<u32, Option<f64>> {
    let mut tallies: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for r in records {
        let t = tallies.entry(r.service_type_id).or_default();
        t.1 += 1;
        if r.response_time > constraint {
            t.0 += 1;
        }
    }
    tallies
        .into_iter()
        .map(|(s, (over, total))| (s, (total > 0).then(|| 100.0 * over as f64 / total as f64)))
        .collect()
}

/// Pooled violation percentage over all records; `None` when there are none.
pub fn pooled_violation_percentage(records: &[ResponseRecord], constraint: f64) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let over = records.iter().filter(|r| r.response_time > constraint).count();
    Some(100.0 * over as f64 / records.len() as f64)
}

/// Outcome of one (mode, service) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub mode: Mode,
    pub service: u32,
    /// Request-weighted mean response time; `None` without completions.
    pub avg_response: Option<f64>,
    pub energy_kwh: f64,
    pub cost_usd: f64,
    pub violation_pct: Option<f64>,
    pub completed: u64,
    pub incomplete: u64,
    pub decisions: u64,
    pub overhead_seconds: f64,
    /// Set when the run aborted.
    pub error: Option<String>,
}

impl ExperimentSummary {
    pub fn failed(mode: Mode, service: u32, error: String) -> Self {
        ExperimentSummary {
            mode,
            service,
            avg_response: None,
            energy_kwh: 0.0,
            cost_usd: 0.0,
            violation_pct: None,
            completed: 0,
            incomplete: 0,
            decisions: 0,
            overhead_seconds: 0.0,
            error: Some(error),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Per-mode averages over service runs, shaped like one "avg." row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAverage {
    pub mode: Mode,
    /// Request-weighted over all completed requests of the mode.
    pub avg_response: Option<f64>,
    /// Unweighted mean of the per-service averages.
    pub service_mean_response: Option<f64>,
    pub energy_kwh: f64,
    pub cost_usd: f64,
    pub violation_pct: Option<f64>,
    pub completed: u64,
    pub overhead_seconds: f64,
}

pub fn mode_averages(summaries: &[ExperimentSummary]) -> Vec<ModeAverage> {
    let mut modes: Vec<Mode> = summaries.iter().map(|s| s.mode).collect();
    modes.sort();
    modes.dedup();
    modes
        .into_iter()
        .map(|mode| {
            let runs: Vec<&ExperimentSummary> = summaries.iter().filter(|s| s.mode == mode && !s.is_failed()).collect();
            let n = runs.len().max(1) as f64;
            let completed: u64 = runs.iter().map(|s| s.completed).sum();
            let weighted = |f: &dyn Fn(&ExperimentSummary) -> Option<f64>| {
                let mut num = 0.0;
                let mut den = 0u64;
                for s in &runs {
                    if let Some(v) = f(s) {
                        num += v * s.completed as f64;
                        den += s.completed;
                    }
                }
                (den > 0).then(|| num / den as f64)
            };
            let mut per_service = RunningMean::default();
            for s in &runs {
                if let Some(v) = s.avg_response {
                    per_service.push(v);
                }
            }
            ModeAverage {
                mode,
                avg_response: weighted(&|s| s.avg_response),
                service_mean_response: per_service.mean(),
                energy_kwh: runs.iter().map(|s| s.energy_kwh).sum::<f64>() / n,
                cost_usd: runs.iter().map(|s| s.cost_usd).sum::<f64>() / n,
                violation_pct: weighted(&|s| s.violation_pct),
                completed,
                overhead_seconds: runs.iter().map(|s| s.overhead_seconds).sum::<f64>() / n,
            }
        })
        .collect()
}
