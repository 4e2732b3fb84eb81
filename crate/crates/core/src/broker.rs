//! Request admission, queueing and VM assignment.
//!
//! A request that finds a free vCPU starts immediately on the VM with the most
//! free vCPUs (lowest id on ties) and holds that single vCPU for
//! `length / mips_per_vcpu` seconds. Otherwise it waits in the queue(s) of the
//! active [`SchedulingPolicy`]. The broker never talks to the event kernel
//! directly: every start is returned as a [`Started`] so the caller can
//! schedule the completion.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{CloudError, Datacenter, VmId};
use crate::workload::{ServiceRequest, REFERENCE_VCPU_MIPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrokerError {
    #[error("request {0} is not running")]
    NotRunning(u64),
    #[error("request {0} arrived at t={1} but the clock is at t={2}")]
    ArrivalTimeMismatch(u64, f64, f64),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulingPolicy {
    Fifo,
    EarliestDeadlineFirst,
    LeastSlackTime,
    SingleQueue,
    MultiQueue,
    MultiDynamicQueue,
}

impl SchedulingPolicy {
    pub const ALL: [SchedulingPolicy; 6] = [
        SchedulingPolicy::Fifo,
        SchedulingPolicy::EarliestDeadlineFirst,
        SchedulingPolicy::LeastSlackTime,
        SchedulingPolicy::SingleQueue,
        SchedulingPolicy::MultiQueue,
        SchedulingPolicy::MultiDynamicQueue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulingPolicy::Fifo => "fifo",
            SchedulingPolicy::EarliestDeadlineFirst => "earliest-deadline-first",
            SchedulingPolicy::LeastSlackTime => "least-slack-time",
            SchedulingPolicy::SingleQueue => "single-queue",
            SchedulingPolicy::MultiQueue => "multi-queue",
            SchedulingPolicy::MultiDynamicQueue => "multi-dynamic-queue",
        }
    }

    pub fn is_multi_queue(self) -> bool {
        matches!(self, SchedulingPolicy::MultiQueue | SchedulingPolicy::MultiDynamicQueue)
    }
}

impl fmt::Display for SchedulingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fifo" => Ok(SchedulingPolicy::Fifo),
            "edf" | "earliest-deadline-first" => Ok(SchedulingPolicy::EarliestDeadlineFirst),
            "lst" | "least-slack-time" => Ok(SchedulingPolicy::LeastSlackTime),
            "single-queue" => Ok(SchedulingPolicy::SingleQueue),
            "multi-queue" => Ok(SchedulingPolicy::MultiQueue),
            "multi-dynamic-queue" => Ok(SchedulingPolicy::MultiDynamicQueue),
            other => Err(format!("unknown scheduling policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub request_id: u64,
    pub service_type_id: u32,
    pub arrival_time: f64,
    pub start_time: f64,
    pub finish_time: f64,
    /// Waiting time plus service time.
    pub response_time: f64,
    pub vm_id: VmId,
}

/// A request that has just been put on a vCPU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Started {
    pub request_id: u64,
    pub vm_id: VmId,
    pub finish_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueKey {
    primary: f64,
    arrival: f64,
    id: u64,
}

impl Eq for QueueKey {}

impl PartialOrd for QueueKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.primary
            .total_cmp(&other.primary)
            .then_with(|| self.arrival.total_cmp(&other.arrival))
            .then_with(|| self.id.cmp(&other.id))
    }
}

type Queue = BTreeMap<QueueKey, ServiceRequest>;

#[derive(Debug, Clone, PartialEq)]
struct Running {
    request: ServiceRequest,
    vm: VmId,
    start: f64,
    service_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Broker {
    policy: SchedulingPolicy,
    global: Queue,
    per_vm: BTreeMap<VmId, Queue>,
    running: BTreeMap<u64, Running>,
    arrivals: u64,
    completions: u64,
    peak_queue_depth: usize,
}

impl Broker {
    pub fn new(policy: SchedulingPolicy) -> Self {
        Broker {
            policy,
            global: Queue::new(),
            per_vm: BTreeMap::new(),
            running: BTreeMap::new(),
            arrivals: 0,
            completions: 0,
            peak_queue_depth: 0,
        }
    }

    pub fn policy(&self) -> SchedulingPolicy {
        self.policy
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn completions(&self) -> u64 {
        self.completions
    }

    pub fn running_len(&self) -> usize {
        self.running.len()
    }

    pub fn queued_len(&self) -> usize {
        self.global.len() + self.per_vm.values().map(|q| q.len()).sum::<usize>()
    }

    /// Largest queue depth since the last call; resets the watermark to the current depth.
    pub fn take_peak_queue_depth(&mut self) -> usize {
        let peak = self.peak_queue_depth;
        self.peak_queue_depth = self.queued_len();
        peak
    }

    /// Ids of queued requests in dispatch order (multi-queue: VM by VM).
    pub fn queued_ids(&self) -> Vec<u64> {
        self.global
            .values()
            .chain(self.per_vm.values().flat_map(|q| q.values()))
            .map(|r| r.id)
            .collect()
    }

    pub fn is_running(&self, request_id: u64) -> bool {
        self.running.contains_key(&request_id)
    }

    fn key(&self, r: &ServiceRequest) -> QueueKey {
        let primary = match self.policy {
            SchedulingPolicy::EarliestDeadlineFirst => r.deadline.unwrap_or(f64::INFINITY),
            // The clock term of slack is common to all queued requests.
            SchedulingPolicy::LeastSlackTime => {
                r.deadline.unwrap_or(f64::INFINITY) - r.length / REFERENCE_VCPU_MIPS
            }
            _ => r.arrival_time,
        };
        QueueKey {
            primary,
            arrival: r.arrival_time,
            id: r.id,
        }
    }

    fn best_free_vm(dc: &Datacenter) -> Option<VmId> {
        let mut best: Option<(u32, VmId)> = None;
        for vm in dc.vms() {
            let free = vm.free_vcpus();
            if free == 0 {
                continue;
            }
            if best.is_none_or(|(f, _)| free > f) {
                best = Some((free, vm.id));
            }
        }
        best.map(|(_, id)| id)
    }

    fn start(&mut self, dc: &mut Datacenter, request: ServiceRequest, vm: VmId, now: f64) -> Result<Started, BrokerError> {
        dc.occupy_vcpu(vm)?;
        let mips = dc.vm(vm)?.vm_type.mips_per_vcpu;
        let service_time = request.length / mips;
        let started = Started {
            request_id: request.id,
            vm_id: vm,
            finish_time: now + service_time,
        };
        self.running.insert(
            request.id,
            Running {
                request,
                vm,
                start: now,
                service_time,
            },
        );
        Ok(started)
    }

    /// Admits a request arriving at `now`.
    pub fn dispatch(&mut self, dc: &mut Datacenter, request: ServiceRequest, now: f64) -> Result<Option<Started>, BrokerError> {
        if request.arrival_time != now {
            return Err(BrokerError::ArrivalTimeMismatch(request.id, request.arrival_time, now));
        }
        self.arrivals += 1;
        if let Some(vm) = Self::best_free_vm(dc) {
            return self.start(dc, request, vm, now).map(Some);
        }
        self.enqueue(dc, request);
        Ok(None)
    }

    fn enqueue(&mut self, dc: &Datacenter, request: ServiceRequest) {
        let key = self.key(&request);
        if self.policy.is_multi_queue() {
            self.ensure_queues(dc);
            let target = self
                .per_vm
                .iter()
                .filter(|(vm, _)| dc.vm(**vm).is_ok())
                .min_by(|a, b| a.1.len().cmp(&b.1.len()).then(a.0.cmp(b.0)))
                .map(|(vm, _)| *vm);
            match target {
                Some(vm) => {
                    self.per_vm.get_mut(&vm).expect("present").insert(key, request);
                }
                None => {
                    self.global.insert(key, request);
                }
            }
        } else {
            self.global.insert(key, request);
        }
        self.peak_queue_depth = self.peak_queue_depth.max(self.queued_len());
    }

    /// Keeps the per-VM queue table in line with the live VM set.
    fn ensure_queues(&mut self, dc: &Datacenter) {
        if self.policy == SchedulingPolicy::MultiDynamicQueue || self.per_vm.is_empty() {
            for vm in dc.vms() {
                self.per_vm.entry(vm.id).or_default();
            }
        }
        let stale: Vec<VmId> = self.per_vm.keys().copied().filter(|id| dc.vm(*id).is_err()).collect();
        let mut orphans = Vec::new();
        for id in stale {
            orphans.extend(self.per_vm.remove(&id).expect("listed").into_values());
        }
        if self.per_vm.is_empty() {
            for vm in dc.vms() {
                self.per_vm.entry(vm.id).or_default();
            }
        }
        for r in orphans {
            self.enqueue(dc, r);
        }
    }

    fn take_next_for(&mut self, vm: VmId) -> Option<ServiceRequest> {
        if !self.policy.is_multi_queue() {
            return self.global.pop_first().map(|(_, r)| r);
        }
        if let Some(r) = self.per_vm.get_mut(&vm).and_then(|q| q.pop_first()) {
            return Some(r.1);
        }
        // Steal from the longest queue.
        let victim = self
            .per_vm
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
            .map(|(id, _)| *id);
        if let Some(v) = victim {
            return self.per_vm.get_mut(&v).and_then(|q| q.pop_first()).map(|(_, r)| r);
        }
        self.global.pop_first().map(|(_, r)| r)
    }

    /// Finishes a running request, frees its vCPU and starts queued work on it.
    pub fn complete_request(
        &mut self,
        dc: &mut Datacenter,
        request_id: u64,
        now: f64,
    ) -> Result<(ResponseRecord, Option<Started>), BrokerError> {
        let run = self.running.remove(&request_id).ok_or(BrokerError::NotRunning(request_id))?;
        dc.release_vcpu(run.vm)?;
        self.completions += 1;
        let record = ResponseRecord {
            request_id,
            service_type_id: run.request.service_type_id,
            arrival_time: run.request.arrival_time,
            start_time: run.start,
            finish_time: now,
            response_time: (run.start - run.request.arrival_time) + run.service_time,
            vm_id: run.vm,
        };
        let next = match self.take_next_for(run.vm) {
            Some(r) => Some(self.start(dc, r, run.vm, now)?),
            None => None,
        };
        Ok((record, next))
    }

    /// Starts queued work on any free vCPU, e.g. after VMs were added.
    pub fn fill_idle(&mut self, dc: &mut Datacenter, now: f64) -> Result<Vec<Started>, BrokerError> {
        if self.policy.is_multi_queue() {
            self.ensure_queues(dc);
        }
        let mut started = Vec::new();
        while self.queued_len() > 0 {
            let Some(vm) = Self::best_free_vm(dc) else { break };
            let Some(r) = self.take_next_for(vm) else { break };
            started.push(self.start(dc, r, vm, now)?);
        }
        Ok(started)
    }

    /// Notifies the broker that the VM set changed (VMs added or removed).
    pub fn sync_vms(&mut self, dc: &mut Datacenter, now: f64) -> Result<Vec<Started>, BrokerError> {
        self.fill_idle(dc, now)
    }

    /// Switches policy; queued requests are reordered, running ones are untouched.
    pub fn set_scheduling_policy(&mut self, policy: SchedulingPolicy, dc: &Datacenter) {
        if policy == self.policy {
            return;
        }
        let mut pending: Vec<ServiceRequest> = std::mem::take(&mut self.global).into_values().collect();
        for q in std::mem::take(&mut self.per_vm).into_values() {
            pending.extend(q.into_values());
        }
        pending.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time).then(a.id.cmp(&b.id)));
        self.policy = policy;
        if policy.is_multi_queue() {
            self.ensure_queues(dc);
        }
        let peak = self.peak_queue_depth;
        for r in pending {
            self.enqueue(dc, r);
        }
        self.peak_queue_depth = peak;
    }
}
