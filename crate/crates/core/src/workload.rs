//! Service types, trend traces and per-interval request generation.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds of simulated time that one day of the trend is compressed into.
pub const DEFAULT_INSTANCE_DURATION: f64 = 864.0;
/// Largest per-instance request count after scaling.
pub const DEFAULT_SCALE_CAP: u64 = 700;
/// MIPS of one vCPU; used to derive default deadlines.
pub const REFERENCE_VCPU_MIPS: f64 = 2400.0;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: expected a non-negative integer, found {content:?}")]
    Parse { line: usize, content: String },
    #[error("trace is empty")]
    Empty,
    #[error("trace has no requests (all counts are zero)")]
    AllZero,
    #[error("scale cap must be >= 1")]
    InvalidCap,
    #[error("invalid service mix: {0}")]
    InvalidMix(String),
    #[error("interval {index} out of range (trace has {len} instances)")]
    IntervalOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Browsing,
    Bidding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Pattern {
    Browsing,
    Bidding,
    /// Percentage of requests drawn as browsing; the rest are bidding.
    Mixed { browsing_pct: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceType {
    pub id: u32,
    pub pattern: Pattern,
    /// Million instructions per request.
    pub required_mi: f64,
}

/// The five service types of the auction benchmark.
pub fn standard_service_types() -> Vec<ServiceType> {
    vec![
        ServiceType { id: 1, pattern: Pattern::Browsing, required_mi: 10_000.0 },
        ServiceType { id: 2, pattern: Pattern::Bidding, required_mi: 20_000.0 },
        ServiceType { id: 3, pattern: Pattern::Mixed { browsing_pct: 70.0 }, required_mi: 12_000.0 },
        ServiceType { id: 4, pattern: Pattern::Mixed { browsing_pct: 50.0 }, required_mi: 15_000.0 },
        ServiceType { id: 5, pattern: Pattern::Mixed { browsing_pct: 30.0 }, required_mi: 17_000.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: u64,
    pub service_type_id: u32,
    pub component: Component,
    pub arrival_time: f64,
    /// Million instructions.
    pub length: f64,
    pub deadline: Option<f64>,
    pub user_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    pub instance_duration: f64,
    pub counts: Vec<u64>,
    pub scale_cap: u64,
}

impl WorkloadTrace {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn interval_window(&self, index: usize) -> (f64, f64) {
        let start = index as f64 * self.instance_duration;
        (start, start + self.instance_duration)
    }
}

/// Parses one non-negative integer per line. Blank lines are skipped.
pub fn parse_trend(text: &str) -> Result<Vec<u64>, WorkloadError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let v = line.parse::<u64>().map_err(|_| WorkloadError::Parse {
            line: i + 1,
            content: line.to_string(),
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(WorkloadError::Empty);
    }
    Ok(out)
}

pub fn load_trend(path: &Path) -> Result<Vec<u64>, WorkloadError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trend(&text)
}

/// Maps one trend day onto one instance and rescales so the busiest instance
/// carries exactly `cap` requests (half-up rounding).
pub fn compress_and_scale(raw: &[u64], cap: u64) -> Result<WorkloadTrace, WorkloadError> {
    compress_and_scale_with(raw, cap, DEFAULT_INSTANCE_DURATION)
}

pub fn compress_and_scale_with(raw: &[u64], cap: u64, instance_duration: f64) -> Result<WorkloadTrace, WorkloadError> {
    if raw.is_empty() {
        return Err(WorkloadError::Empty);
    }
    if cap == 0 {
        return Err(WorkloadError::InvalidCap);
    }
    let max = *raw.iter().max().expect("non-empty");
    if max == 0 {
        return Err(WorkloadError::AllZero);
    }
    let (max, cap) = (max as u128, cap as u128);
    let counts = raw
        .iter()
        .map(|&c| ((2 * c as u128 * cap + max) / (2 * max)) as u64)
        .collect();
    Ok(WorkloadTrace {
        instance_duration,
        counts,
        scale_cap: cap as u64,
    })
}

/// Percentages per service type id; must sum to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceMix(pub Vec<(u32, f64)>);

impl ServiceMix {
    pub fn single(service_type_id: u32) -> Self {
        ServiceMix(vec![(service_type_id, 100.0)])
    }

    pub fn validate(&self, types: &[ServiceType]) -> Result<(), WorkloadError> {
        if self.0.is_empty() {
            return Err(WorkloadError::InvalidMix("mix is empty".into()));
        }
        for (id, pct) in &self.0 {
            if !types.iter().any(|t| t.id == *id) {
                return Err(WorkloadError::InvalidMix(format!("unknown service type {id}")));
            }
            if !(*pct >= 0.0) {
                return Err(WorkloadError::InvalidMix(format!("negative share for service {id}")));
            }
        }
        let sum: f64 = self.0.iter().map(|(_, p)| p).sum();
        if (sum - 100.0).abs() > 1e-6 {
            return Err(WorkloadError::InvalidMix(format!("shares sum to {sum}, expected 100")));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u32 {
        if self.0.len() == 1 {
            return self.0[0].0;
        }
        let u = rng.gen::<f64>() * 100.0;
        let mut acc = 0.0;
        for (id, pct) in &self.0 {
            acc += pct;
            if u < acc {
                return *id;
            }
        }
        self.0.last().expect("validated non-empty").0
    }
}

/// Seeded per-interval request source.
#[derive(Debug, Clone)]
pub struct RequestGenerator {
    pub trace: WorkloadTrace,
    pub service_types: Vec<ServiceType>,
    pub mix: ServiceMix,
    pub seed: u64,
    /// Arrivals are placed uniformly in `[start, start + arrival_window)`.
    /// Zero releases the whole interval at its start.
    pub arrival_window: f64,
    /// Deadline = arrival + factor * (length / REFERENCE_VCPU_MIPS).
    pub deadline_factor: f64,
}

impl RequestGenerator {
    pub fn new(trace: WorkloadTrace, service_types: Vec<ServiceType>, mix: ServiceMix, seed: u64) -> Result<Self, WorkloadError> {
        mix.validate(&service_types)?;
        let arrival_window = trace.instance_duration;
        Ok(RequestGenerator {
            trace,
            service_types,
            mix,
            seed,
            arrival_window,
            deadline_factor: 10.0,
        })
    }

    pub fn with_arrival_window(mut self, window: f64) -> Self {
        self.arrival_window = window.clamp(0.0, self.trace.instance_duration);
        self
    }

    pub fn with_deadline_factor(mut self, factor: f64) -> Self {
        self.deadline_factor = factor;
        self
    }

    /// Requests of one interval, sorted by arrival; ids start at `first_id`.
    pub fn generate_interval_requests(&self, interval_index: usize, first_id: u64) -> Result<Vec<ServiceRequest>, WorkloadError> {
        let count = *self
            .trace
            .counts
            .get(interval_index)
            .ok_or(WorkloadError::IntervalOutOfRange {
                index: interval_index,
                len: self.trace.len(),
            })?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(interval_index as u64);
        let start = self.trace.interval_window(interval_index).0;

        let mut drawn: Vec<(f64, u32, Component)> = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let offset = rng.gen::<f64>() * self.arrival_window;
            let type_id = self.mix.draw(&mut rng);
            let st = self.service_type(type_id);
            let component = match st.pattern {
                Pattern::Browsing => Component::Browsing,
                Pattern::Bidding => Component::Bidding,
                Pattern::Mixed { browsing_pct } => {
                    if rng.gen::<f64>() * 100.0 < browsing_pct {
                        Component::Browsing
                    } else {
                        Component::Bidding
                    }
                }
            };
            let mut at = start + offset;
            if self.arrival_window > 0.0 && at >= start + self.arrival_window {
                // Rounding can land exactly on the open end of the window.
                at = (start + self.arrival_window).next_down();
            }
            drawn.push((at, type_id, component));
        }
        drawn.sort_by(|a, b| a.0.total_cmp(&b.0));

        Ok(drawn
            .into_iter()
            .enumerate()
            .map(|(i, (arrival_time, type_id, component))| {
                let length = self.service_type(type_id).required_mi;
                ServiceRequest {
                    id: first_id + i as u64,
                    service_type_id: type_id,
                    component,
                    arrival_time,
                    length,
                    deadline: Some(arrival_time + self.deadline_factor * length / REFERENCE_VCPU_MIPS),
                    user_id: None,
                }
            })
            .collect())
    }

    fn service_type(&self, id: u32) -> &ServiceType {
        self.service_types
            .iter()
            .find(|t| t.id == id)
            .expect("mix validated against service types")
    }
}
