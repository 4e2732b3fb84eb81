//! Windowed QoS sampling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::broker::ResponseRecord;
use crate::metrics::{Observations, RunningMean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    /// End of the sampled window.
    pub time_instance: f64,
    pub window_start: f64,
    /// `None` when nothing completed in the window.
    pub avg_response_time: Option<f64>,
    /// Completions in the window.
    pub throughput: u64,
    pub energy_kwh_interval: f64,
    pub cost_interval: f64,
    pub per_service: BTreeMap<u32, f64>,
    /// Requests that arrived in the window.
    pub arrivals: u64,
    /// Deepest broker queue seen in the window.
    pub peak_queue_depth: usize,
    /// vCPUs running at the end of the window.
    pub total_vcpus: u32,
    /// Run duration over window duration; used to project budgets.
    pub projection: f64,
}

impl MonitorSample {
    pub fn is_empty(&self) -> bool {
        self.throughput == 0
    }

    pub fn observations(&self) -> Observations {
        Observations {
            response_time: self.avg_response_time,
            energy_kwh: self.energy_kwh_interval,
            cost_usd: self.cost_interval,
            throughput: self.throughput as f64,
            projection: self.projection,
        }
    }
}

/// Infrastructure readings taken at tick time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Readings {
    pub total_energy: f64,
    pub total_cost: f64,
    pub arrivals: u64,
    pub peak_queue_depth: usize,
    pub total_vcpus: u32,
}

/// Stages completions between ticks.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    run_duration: f64,
    window_start: f64,
    all: RunningMean,
    by_service: BTreeMap<u32, RunningMean>,
    last_energy: f64,
    last_cost: f64,
    last_arrivals: u64,
}

impl Monitor {
    pub fn new(run_duration: f64) -> Self {
        Monitor {
            run_duration,
            ..Default::default()
        }
    }

    pub fn record(&mut self, record: &ResponseRecord) {
        self.all.push(record.response_time);
        self.by_service
            .entry(record.service_type_id)
            .or_default()
            .push(record.response_time);
    }

    /// Closes the window ending at `now` and clears the staging area.
    pub fn tick(&mut self, now: f64, readings: Readings) -> MonitorSample {
        let span = now - self.window_start;
        let projection = if span > 0.0 { self.run_duration / span } else { 1.0 };
        let all = std::mem::take(&mut self.all);
        let sample = MonitorSample {
            time_instance: now,
            window_start: self.window_start,
            avg_response_time: all.mean(),
            throughput: all.count(),
            energy_kwh_interval: readings.total_energy - self.last_energy,
            cost_interval: readings.total_cost - self.last_cost,
            per_service: std::mem::take(&mut self.by_service)
                .into_iter()
                .filter_map(|(s, m)| m.mean().map(|v| (s, v)))
                .collect(),
            arrivals: readings.arrivals - self.last_arrivals,
            peak_queue_depth: readings.peak_queue_depth,
            total_vcpus: readings.total_vcpus,
            projection,
        };
        self.window_start = now;
        self.last_energy = readings.total_energy;
        self.last_cost = readings.total_cost;
        self.last_arrivals = readings.arrivals;
        sample
    }
}
