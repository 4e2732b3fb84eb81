//! Experiment configuration: TOML schema, validation and the bundled preset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{AdaptationRule, AdaptationTactic, RuleSet, TacticsCatalogue, TacticsError};
use crate::awareness::{AwarenessError, AwarenessSettings};
use crate::broker::SchedulingPolicy;
use crate::cloud::{CloudError, Datacenter, HostSpec, VmType};
use crate::goals::{GoalError, GoalsModel, QosGoal};
use crate::mode::Mode;
use crate::workload::{
    compress_and_scale_with, load_trend, parse_trend, standard_service_types, ServiceType, WorkloadError,
    WorkloadTrace, DEFAULT_INSTANCE_DURATION, DEFAULT_SCALE_CAP,
};

const REFERENCE_TOML: &str = include_str!("../../../configs/reference.toml");
const REFERENCE_TRACE: &str = include_str!("../../../configs/traces/synthetic-30d.txt");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("[{section}] {key}: {reason}")]
    Invalid {
        section: &'static str,
        key: String,
        reason: String,
    },
    #[error("[workload] {0}")]
    Workload(#[from] WorkloadError),
    #[error("[datacenter] {0}")]
    Cloud(#[from] CloudError),
    #[error("[goals] {0}")]
    Goals(#[from] GoalError),
    #[error("[tactics]/[rules] {0}")]
    Tactics(#[from] TacticsError),
    #[error("[awareness] {0}")]
    Awareness(#[from] AwarenessError),
}

fn invalid(section: &'static str, key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        section,
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatacenterSection {
    pub max_hosts: usize,
    pub host: HostSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deployment {
    pub hosts: usize,
    /// VM counts by type name.
    pub vms: BTreeMap<String, u32>,
}

impl Deployment {
    pub fn vm_total(&self) -> u32 {
        self.vms.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentSection {
    pub non_adaptive: Deployment,
    pub adaptive: Deployment,
}

impl DeploymentSection {
    pub fn for_mode(&self, mode: Mode) -> &Deployment {
        if mode.is_adaptive() {
            &self.adaptive
        } else {
            &self.non_adaptive
        }
    }
}

fn default_cap() -> u64 {
    DEFAULT_SCALE_CAP
}

fn default_duration() -> f64 {
    DEFAULT_INSTANCE_DURATION
}

fn default_deadline_factor() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    /// Trend file, relative to the config file.
    pub trace: PathBuf,
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default = "default_duration")]
    pub instance_duration: f64,
    /// Seconds after the interval start over which arrivals spread; defaults
    /// to the whole interval. 0 releases every request at the interval start.
    #[serde(default)]
    pub arrival_window: Option<f64>,
    #[serde(default = "default_deadline_factor")]
    pub deadline_factor: f64,
    #[serde(default = "standard_service_types")]
    pub service_types: Vec<ServiceType>,
    /// Service types run by default, one run each.
    #[serde(default)]
    pub services: Vec<u32>,
}

impl WorkloadSection {
    pub fn arrival_window(&self) -> f64 {
        self.arrival_window.unwrap_or(self.instance_duration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerSection {
    pub policy: SchedulingPolicy,
}

impl Default for BrokerSection {
    fn default() -> Self {
        BrokerSection {
            policy: SchedulingPolicy::Fifo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    /// Seconds between monitor ticks; a positive multiple of the instance duration.
    pub monitoring_frequency: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            monitoring_frequency: DEFAULT_INSTANCE_DURATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TacticsSection {
    pub scale_vm_type: String,
    pub scheduling_variations: Vec<SchedulingPolicy>,
    pub catalogue: Vec<AdaptationTactic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Number of instances to run; defaults to the trace length.
    #[serde(default)]
    pub duration: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub datacenter: DatacenterSection,
    pub vm_types: Vec<VmType>,
    pub deployment: DeploymentSection,
    pub workload: WorkloadSection,
    #[serde(default)]
    pub broker: BrokerSection,
    #[serde(default)]
    pub controller: ControllerSection,
    pub goals: Vec<QosGoal>,
    pub tactics: TacticsSection,
    pub rules: Vec<AdaptationRule>,
    #[serde(default)]
    pub awareness: AwarenessSettings,
    /// Raw trend counts, filled in when the config is loaded.
    #[serde(skip)]
    pub trend: Vec<u64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Parses `text`; the trace path is resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        let trace_path = base_dir.join(&cfg.workload.trace);
        cfg.trend = load_trend(&trace_path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// The bundled reference setup with its embedded trace.
    pub fn reference() -> Self {
        let mut cfg: ExperimentConfig = toml::from_str(REFERENCE_TOML).expect("bundled config parses");
        cfg.trend = parse_trend(REFERENCE_TRACE).expect("bundled trace parses");
        cfg.validate().expect("bundled config is valid");
        cfg
    }

    pub fn reference_toml() -> &'static str {
        REFERENCE_TOML
    }

    pub fn reference_trace() -> &'static str {
        REFERENCE_TRACE
    }

    pub fn host_spec(&self) -> &HostSpec {
        &self.datacenter.host
    }

    pub fn goals_model(&self) -> Result<GoalsModel, ConfigError> {
        Ok(GoalsModel::load_goals(self.goals.clone())?)
    }

    pub fn catalogue(&self) -> Result<TacticsCatalogue, ConfigError> {
        Ok(TacticsCatalogue::new(
            self.tactics.catalogue.clone(),
            self.tactics.scale_vm_type.clone(),
            self.tactics.scheduling_variations.clone(),
        )?)
    }

    pub fn rule_set(&self, catalogue: &TacticsCatalogue) -> Result<RuleSet, ConfigError> {
        Ok(RuleSet::new(self.rules.clone(), catalogue)?)
    }

    pub fn trace(&self) -> Result<WorkloadTrace, ConfigError> {
        let mut t = compress_and_scale_with(&self.trend, self.workload.cap, self.workload.instance_duration)?;
        t.counts.truncate(self.instances());
        Ok(t)
    }

    /// Instances actually simulated.
    pub fn instances(&self) -> usize {
        self.duration.unwrap_or(self.trend.len()).min(self.trend.len())
    }

    /// Service types to run when none are given explicitly.
    pub fn default_services(&self) -> Vec<u32> {
        if self.workload.services.is_empty() {
            self.workload.service_types.iter().map(|s| s.id).collect()
        } else {
            self.workload.services.clone()
        }
    }

    /// Builds a datacenter with the mode's initial deployment: `hosts` hosts
    /// powered on, VMs placed largest type first on the host with the most
    /// free capacity (lowest id on ties).
    pub fn build_datacenter(&self, mode: Mode) -> Result<Datacenter, ConfigError> {
        let mut dc = Datacenter::new(self.datacenter.host.clone(), self.datacenter.max_hosts, self.vm_types.clone())?;
        let dep = self.deployment.for_mode(mode);
        let section = if mode.is_adaptive() { "deployment.adaptive" } else { "deployment.non_adaptive" };
        for _ in 0..dep.hosts {
            dc.power_on_host()?;
        }
        let mut types: Vec<(VmType, u32)> = Vec::new();
        for (name, &count) in &dep.vms {
            let t = dc
                .vm_type(name)
                .map_err(|_| invalid(section, format!("vms.{name}"), "unknown VM type"))?
                .clone();
            types.push((t, count));
        }
        types.sort_by(|a, b| {
            b.0.allocation_mips()
                .total_cmp(&a.0.allocation_mips())
                .then(a.0.name.cmp(&b.0.name))
        });
        for (t, count) in types {
            for _ in 0..count {
                let need = t.allocation_mips();
                let host = dc
                    .hosts()
                    .iter()
                    .filter(|h| h.fits(need))
                    .max_by(|a, b| a.free_mips().total_cmp(&b.free_mips()).then(b.id.cmp(&a.id)))
                    .map(|h| h.id)
                    .ok_or_else(|| {
                        invalid(
                            section,
                            "vms",
                            format!("deployment does not fit on {} hosts (placing {})", dep.hosts, t.name),
                        )
                    })?;
                dc.place_vm(&t, host)?;
            }
        }
        Ok(dc)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.datacenter.host.validate()?;
        if self.datacenter.max_hosts == 0 {
            return Err(invalid("datacenter", "max_hosts", "must be >= 1"));
        }
        if self.vm_types.is_empty() {
            return Err(invalid("vm_types", "", "at least one VM type is required"));
        }
        for (i, t) in self.vm_types.iter().enumerate() {
            t.validate()?;
            if self.vm_types[..i].iter().any(|o| o.name == t.name) {
                return Err(invalid("vm_types", t.name.clone(), "duplicate name"));
            }
        }
        for (key, dep) in [("non_adaptive", &self.deployment.non_adaptive), ("adaptive", &self.deployment.adaptive)] {
            if dep.hosts == 0 || dep.hosts > self.datacenter.max_hosts {
                return Err(invalid("deployment", format!("{key}.hosts"), "must be in [1, max_hosts]"));
            }
            if dep.vm_total() == 0 {
                return Err(invalid("deployment", format!("{key}.vms"), "at least one VM is required"));
            }
        }
        for mode in [Mode::NonAdaptive, Mode::SelfAdaptive] {
            self.build_datacenter(mode)?;
        }

        let w = &self.workload;
        if !(w.instance_duration > 0.0 && w.instance_duration.is_finite()) {
            return Err(invalid("workload", "instance_duration", "must be a positive number"));
        }
        if let Some(win) = w.arrival_window {
            if !(0.0..=w.instance_duration).contains(&win) {
                return Err(invalid("workload", "arrival_window", "must be in [0, instance_duration]"));
            }
        }
        if !(w.deadline_factor > 0.0) {
            return Err(invalid("workload", "deadline_factor", "must be > 0"));
        }
        if w.service_types.is_empty() {
            return Err(invalid("workload", "service_types", "must not be empty"));
        }
        for s in &self.default_services() {
            if !w.service_types.iter().any(|t| t.id == *s) {
                return Err(invalid("workload", "services", format!("unknown service type {s}")));
            }
        }
        compress_and_scale_with(&self.trend, w.cap, w.instance_duration)?;
        if self.duration == Some(0) {
            return Err(invalid("", "duration", "must be >= 1"));
        }
        if let Some(d) = self.duration {
            if d > self.trend.len() {
                return Err(invalid("", "duration", format!("exceeds the {} trace instances", self.trend.len())));
            }
        }

        let f = self.controller.monitoring_frequency;
        let ratio = f / w.instance_duration;
        if !(f > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(invalid(
                "controller",
                "monitoring_frequency",
                "must be a positive multiple of instance_duration",
            ));
        }

        self.goals_model()?;
        let cat = self.catalogue()?;
        if !self.vm_types.iter().any(|t| t.name == cat.scale_vm_type) {
            return Err(invalid("tactics", "scale_vm_type", format!("unknown VM type {}", cat.scale_vm_type)));
        }
        self.rule_set(&cat)?;
        self.awareness.validate()?;
        Ok(())
    }
}
