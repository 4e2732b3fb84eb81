//! One (mode, service) run: event wiring between kernel, cloud, broker and controller.
//!
//! Each interval boundary at time `T = k * D` runs, as same-time events:
//! boundary (accrual), then an optional monitor tick, then an optional
//! execution, and finally the interval close, which records interval `k - 1`
//! and releases interval `k`'s requests. Adaptations therefore act before the
//! next interval's load arrives.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{
    execute, AdaptationDecision, ExecutionError, ExecutionOutcome, Monitor, MonitorSample, Readings, RuleSet,
    SystemState, TacticsCatalogue,
};
use crate::awareness::{AwarenessConfig, DecisionPath};
use crate::broker::{Broker, BrokerError, ResponseRecord, Started};
use crate::cloud::{CloudError, Datacenter};
use crate::config::{ConfigError, ExperimentConfig};
use crate::controller::Controller;
use crate::goals::{GoalsModel, QualityAttribute};
use crate::kernel::{EventKind, Kernel, KernelError, SimEvent};
use crate::metrics::{
    overhead_total, pooled_violation_percentage, ExperimentSummary, IntervalMetrics, MetricsCollector, OverheadLedger,
    Phase, RunningMean,
};
use crate::mode::Mode;
use crate::workload::{RequestGenerator, ServiceMix, WorkloadError, WorkloadTrace};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Execution(#[from] ExecutionError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown service type {0}")]
    UnknownService(u32),
    #[error("simulation already finished")]
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Arrival(Box<crate::workload::ServiceRequest>),
    Completion(u64),
    Boundary(usize),
    Monitor(usize),
    Execute(usize),
}

/// One executed (or aborted) adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLogEntry {
    pub time: f64,
    pub tactic_id: String,
    pub magnitude: u32,
    pub trigger: Vec<QualityAttribute>,
    pub proactive: bool,
    pub applied: bool,
    pub hosts_after: usize,
    pub vms_after: usize,
    pub path: Option<DecisionPath>,
}

/// Request accounting at a pause: `arrivals == completions + queued + running`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestBalance {
    pub arrivals: u64,
    pub completions: u64,
    pub queued: u64,
    pub running: u64,
}

impl RequestBalance {
    pub fn holds(&self) -> bool {
        self.arrivals == self.completions + self.queued + self.running
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: Mode,
    pub service: u32,
    pub intervals: Vec<IntervalMetrics>,
    pub records: Vec<ResponseRecord>,
    pub ledger: OverheadLedger,
    pub decisions: Vec<DecisionLogEntry>,
    pub summary: ExperimentSummary,
    pub final_hosts: usize,
    pub final_vms: usize,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    mode: Mode,
    service: u32,
    kernel: Kernel<Payload>,
    dc: Datacenter,
    broker: Broker,
    generator: RequestGenerator,
    goals: GoalsModel,
    rules: RuleSet,
    catalogue: TacticsCatalogue,
    controller: Option<Controller>,
    monitor: Monitor,
    metrics: MetricsCollector,
    ledger: OverheadLedger,
    instance_duration: f64,
    instances: usize,
    tick_every: usize,
    next_request_id: u64,
    generated: u64,
    last_accrual: f64,
    pending: Option<(AdaptationDecision, MonitorSample, Option<DecisionPath>)>,
    interval_decisions: u32,
    decisions: Vec<DecisionLogEntry>,
    finished: bool,
}

impl Simulation {
    /// A fresh run of `service` under `mode`.
    pub fn new(cfg: &ExperimentConfig, mode: Mode, service: u32) -> Result<Self, SimError> {
        let trace: WorkloadTrace = cfg.trace()?;
        if !cfg.workload.service_types.iter().any(|s| s.id == service) {
            return Err(SimError::UnknownService(service));
        }
        let generator = RequestGenerator::new(
            trace,
            cfg.workload.service_types.clone(),
            ServiceMix::single(service),
            cfg.seed,
        )?
        .with_arrival_window(cfg.workload.arrival_window())
        .with_deadline_factor(cfg.workload.deadline_factor);
        let catalogue = cfg.catalogue()?;
        let rules = cfg.rule_set(&catalogue)?;
        let controller = if mode.is_adaptive() {
            let aw = AwarenessConfig::for_mode(mode, cfg.awareness.clone()).map_err(ConfigError::from)?;
            Some(Controller::new(aw))
        } else {
            None
        };
        let instances = cfg.instances();
        let duration = cfg.workload.instance_duration;
        let tick_every = (cfg.controller.monitoring_frequency / duration).round().max(1.0) as usize;
        let mut sim = Simulation {
            mode,
            service,
            kernel: Kernel::new(),
            dc: cfg.build_datacenter(mode)?,
            broker: Broker::new(cfg.broker.policy),
            generator,
            goals: cfg.goals_model()?,
            rules,
            catalogue,
            controller,
            monitor: Monitor::new(instances as f64 * duration),
            metrics: MetricsCollector::new(),
            ledger: OverheadLedger::default(),
            instance_duration: duration,
            instances,
            tick_every,
            next_request_id: 0,
            generated: 0,
            last_accrual: 0.0,
            pending: None,
            interval_decisions: 0,
            decisions: Vec::new(),
            finished: false,
        };
        sim.close_interval(0)?;
        Ok(sim)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn now(&self) -> f64 {
        self.kernel.now()
    }

    pub fn end_time(&self) -> f64 {
        self.instances as f64 * self.instance_duration
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn datacenter(&self) -> &Datacenter {
        &self.dc
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    pub fn intervals(&self) -> &[IntervalMetrics] {
        self.metrics.intervals()
    }

    pub fn records(&self) -> &[ResponseRecord] {
        self.metrics.records()
    }

    pub fn ledger(&self) -> &OverheadLedger {
        &self.ledger
    }

    pub fn goals(&self) -> &GoalsModel {
        &self.goals
    }

    pub fn decisions(&self) -> &[DecisionLogEntry] {
        &self.decisions
    }

    pub fn controller(&self) -> Option<&Controller> {
        self.controller.as_ref()
    }

    pub fn request_balance(&self) -> RequestBalance {
        RequestBalance {
            arrivals: self.broker.arrivals(),
            completions: self.broker.completions(),
            queued: self.broker.queued_len() as u64,
            running: self.broker.running_len() as u64,
        }
    }

    /// Processes events up to `t` (clamped to the run end) and pauses.
    pub fn run_until(&mut self, t: f64) -> Result<(), SimError> {
        let end = t.min(self.end_time());
        while !self.finished {
            let Some(ev) = self.kernel.pop_due(end) else { break };
            self.handle(ev)?;
        }
        if !self.finished && end > self.kernel.now() {
            self.accrue_to(end);
            self.kernel.advance_to(end)?;
        }
        Ok(())
    }

    /// Runs to the end and summarises.
    pub fn run(mut self) -> Result<RunResult, SimError> {
        self.run_until(self.end_time())?;
        Ok(self.into_result())
    }

    /// Applies `decision` to a copy of this run and plays it to the next
    /// interval boundary; returns the metrics of the interval that closes there.
    pub fn what_if(&self, decision: &AdaptationDecision) -> Result<Option<IntervalMetrics>, SimError> {
        let mut copy = self.clone();
        copy.controller = None;
        let now = copy.kernel.now();
        let report = execute(decision, &copy.catalogue, &mut copy.dc, &mut copy.broker, now)?;
        copy.schedule_started(&report.started)?;
        let before = copy.metrics.intervals().len();
        let next = ((now / copy.instance_duration).floor() + 1.0) * copy.instance_duration;
        copy.run_until(next)?;
        Ok(copy.metrics.intervals().get(before).cloned())
    }

    fn accrue_to(&mut self, t: f64) {
        let dt = t - self.last_accrual;
        if dt > 0.0 {
            self.dc.accrue(dt);
            self.last_accrual = t;
        }
    }

    fn schedule_started(&mut self, started: &[Started]) -> Result<(), SimError> {
        for s in started {
            self.kernel
                .schedule(s.finish_time, EventKind::RequestCompletion, Payload::Completion(s.request_id))?;
        }
        Ok(())
    }

    fn handle(&mut self, ev: SimEvent<Payload>) -> Result<(), SimError> {
        self.accrue_to(ev.fire_time);
        let now = ev.fire_time;
        match ev.payload {
            Payload::Arrival(req) => {
                if let Some(s) = self.broker.dispatch(&mut self.dc, *req, now)? {
                    self.schedule_started(&[s])?;
                }
            }
            Payload::Completion(id) => {
                let (record, next) = self.broker.complete_request(&mut self.dc, id, now)?;
                self.monitor.record(&record);
                self.metrics.on_completion(record);
                if let Some(s) = next {
                    self.schedule_started(&[s])?;
                }
            }
            Payload::Boundary(k) => {
                let tick = self.controller.is_some() && k < self.instances && k % self.tick_every == 0;
                if tick {
                    self.kernel.schedule(now, EventKind::MonitorTick, Payload::Monitor(k))?;
                } else {
                    self.close_interval(k)?;
                }
            }
            Payload::Monitor(k) => self.monitor_tick(k, now)?,
            Payload::Execute(k) => {
                self.execute_pending(now)?;
                self.close_interval(k)?;
            }
        }
        Ok(())
    }

    fn monitor_tick(&mut self, k: usize, now: f64) -> Result<(), SimError> {
        let t = Instant::now();
        let readings = Readings {
            total_energy: self.dc.total_energy(),
            total_cost: self.dc.total_cost(),
            arrivals: self.broker.arrivals(),
            peak_queue_depth: self.broker.take_peak_queue_depth(),
            total_vcpus: self.dc.total_vcpus(),
        };
        let sample = self.monitor.tick(now, readings);
        self.ledger.add(Phase::Monitoring, t.elapsed());

        let controller = self.controller.as_mut().expect("ticks only run with a controller");
        let state = SystemState {
            dc: &self.dc,
            policy: self.broker.policy(),
        };
        let outcome = controller.tick(&sample, &mut self.goals, &self.rules, &self.catalogue, state, &mut self.ledger);
        if let Some(p) = outcome.switched_to {
            log::debug!("t={now} meta-awareness switched to the {} path", p.as_str());
        }
        match outcome.decision {
            Some(d) => {
                self.pending = Some((d, sample, outcome.path));
                self.kernel.schedule(now, EventKind::AdaptationExecute, Payload::Execute(k))?;
            }
            None => self.close_interval(k)?,
        }
        Ok(())
    }

    fn execute_pending(&mut self, now: f64) -> Result<(), SimError> {
        let Some((decision, sample, path)) = self.pending.take() else {
            return Ok(());
        };
        let t = Instant::now();
        let report = execute(&decision, &self.catalogue, &mut self.dc, &mut self.broker, now)?;
        self.ledger.add(Phase::Executing, t.elapsed());
        self.schedule_started(&report.started)?;
        if let Some(c) = self.controller.as_mut() {
            c.on_executed(&decision, &report, &sample, &self.goals);
        }
        if let ExecutionOutcome::Aborted(reason) = &report.outcome {
            log::debug!("t={now} {} aborted: {reason}", decision.tactic_id);
        }
        self.interval_decisions += u32::from(report.applied());
        self.decisions.push(DecisionLogEntry {
            time: now,
            tactic_id: decision.tactic_id.clone(),
            magnitude: report.magnitude,
            trigger: decision.trigger.clone(),
            proactive: decision.proactive,
            applied: report.applied(),
            hosts_after: report.hosts_after,
            vms_after: report.vms_after,
            path,
        });
        Ok(())
    }

    /// Records interval `k - 1` and releases interval `k`.
    fn close_interval(&mut self, k: usize) -> Result<(), SimError> {
        let now = k as f64 * self.instance_duration;
        if k > 0 {
            let projection = self.instances as f64;
            self.metrics.record_interval(
                k - 1,
                self.dc.total_energy(),
                self.dc.total_cost(),
                &self.goals,
                projection,
                std::mem::take(&mut self.interval_decisions),
            );
        }
        if k >= self.instances {
            self.finished = true;
            return Ok(());
        }
        let requests = self.generator.generate_interval_requests(k, self.next_request_id)?;
        self.next_request_id += requests.len() as u64;
        self.generated += requests.len() as u64;
        for r in requests {
            self.kernel
                .schedule(r.arrival_time.max(now), EventKind::RequestArrival, Payload::Arrival(Box::new(r)))?;
        }
        self.kernel.schedule(
            (k + 1) as f64 * self.instance_duration,
            EventKind::IntervalBoundary,
            Payload::Boundary(k + 1),
        )?;
        Ok(())
    }

    fn into_result(self) -> RunResult {
        let records = self.metrics.records().to_vec();
        let mut mean = RunningMean::default();
        for r in &records {
            mean.push(r.response_time);
        }
        let violation_pct = self
            .goals
            .goal_for(QualityAttribute::ResponseTime)
            .and_then(|g| pooled_violation_percentage(&records, g.constraint_value));
        let summary = ExperimentSummary {
            mode: self.mode,
            service: self.service,
            avg_response: mean.mean(),
            energy_kwh: self.dc.total_energy(),
            cost_usd: self.dc.total_cost(),
            violation_pct,
            completed: records.len() as u64,
            incomplete: self.generated - records.len() as u64,
            decisions: self.decisions.iter().filter(|d| d.applied).count() as u64,
            overhead_seconds: overhead_total(&self.ledger),
            error: None,
        };
        RunResult {
            mode: self.mode,
            service: self.service,
            intervals: self.metrics.intervals().to_vec(),
            records,
            ledger: self.ledger,
            decisions: self.decisions,
            summary,
            final_hosts: self.dc.powered_on_hosts(),
            final_vms: self.dc.vm_count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_cfg(n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::reference();
        cfg.duration = Some(n);
        cfg
    }

    #[test]
    fn non_adaptive_service_one_is_exact() {
        let r = Simulation::new(&short_cfg(3), Mode::NonAdaptive, 1).unwrap().run().unwrap();
        assert_eq!(r.intervals.len(), 3);
        for i in &r.intervals {
            assert!((i.avg_response.unwrap() - 4.17).abs() < 0.01);
        }
        assert_eq!(r.summary.overhead_seconds, 0.0);
        assert_eq!(r.summary.incomplete, 0);
    }

    #[test]
    fn balance_holds_at_pauses() {
        let mut sim = Simulation::new(&short_cfg(4), Mode::GoalAware, 2).unwrap();
        let mut t = 0.0;
        while !sim.is_finished() {
            t += 97.0;
            sim.run_until(t).unwrap();
            assert!(sim.request_balance().holds());
            sim.datacenter().check_invariants().unwrap();
        }
        let total: f64 = sim.intervals().iter().map(|i| i.energy_kwh).sum();
        let dc_total = sim.datacenter().total_energy();
        assert!((total - dc_total).abs() <= 1e-9 * dc_total);
    }

    #[test]
    fn what_if_leaves_original_untouched() {
        let mut sim = Simulation::new(&short_cfg(3), Mode::SelfAdaptive, 1).unwrap();
        sim.run_until(864.0 + 1.0).unwrap();
        let vms = sim.datacenter().vm_count();
        let decision = AdaptationDecision {
            tactic_id: "vertical-scaling".into(),
            magnitude: 2,
            trigger: vec![QualityAttribute::ResponseTime],
            decided_at: sim.now(),
            decided_by: Mode::SelfAdaptive,
            proactive: false,
        };
        let m = sim.what_if(&decision).unwrap().unwrap();
        assert_eq!(m.interval_index, 1);
        assert_eq!(sim.datacenter().vm_count(), vms);
    }
}
