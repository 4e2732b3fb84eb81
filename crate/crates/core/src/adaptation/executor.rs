//! Feasibility checks and tactic execution against the datacenter and broker.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broker::{Broker, BrokerError, SchedulingPolicy, Started};
use crate::cloud::{CloudError, Datacenter, HostId, VmId, VmType};

use super::tactics::{AdaptationTactic, TacticKind, TacticsCatalogue};
use super::AdaptationDecision;

#[derive(Debug, Error)]
pub enum ExecutionError {
    #[error("decision names unknown tactic {0:?}")]
    UnknownTactic(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
}

/// What the controller may look at when judging feasibility.
#[derive(Debug, Clone, Copy)]
pub struct SystemState<'a> {
    pub dc: &'a Datacenter,
    pub policy: SchedulingPolicy,
}

/// VMs of `vm_type` that could still be placed, counting hosts that can be powered on.
pub fn provisionable_vms(dc: &Datacenter, vm_type: &VmType) -> usize {
    let need = vm_type.allocation_mips();
    let per_empty = (dc.host_spec().capacity_mips() / need).floor() as usize;
    let mut n: usize = dc
        .hosts()
        .iter()
        .map(|h| {
            if h.powered_on {
                (h.free_mips().max(0.0) / need).floor() as usize
            } else {
                per_empty
            }
        })
        .sum();
    n += (dc.max_hosts() - dc.hosts().len()) * per_empty;
    n
}

fn powerable_hosts(dc: &Datacenter) -> usize {
    dc.hosts().iter().filter(|h| !h.powered_on).count() + dc.max_hosts() - dc.hosts().len()
}

/// Hosts horizontal de-scaling would switch off for `step`, in order.
/// Fewest VMs first, highest id on ties; only hosts whose VMs are all idle.
fn descaling_hosts(dc: &Datacenter, min_hosts: usize, step: usize) -> Vec<HostId> {
    let mut hosts: Vec<_> = dc
        .hosts()
        .iter()
        .filter(|h| h.powered_on && h.vms.iter().all(|v| dc.vm(*v).is_ok_and(|vm| vm.is_idle())))
        .collect();
    hosts.sort_by(|a, b| a.vms.len().cmp(&b.vms.len()).then(b.id.cmp(&a.id)));
    let mut running = dc.powered_on_hosts();
    let mut vms = dc.vm_count();
    let mut chosen = Vec::new();
    for h in hosts {
        if chosen.len() == step || running <= min_hosts {
            break;
        }
        if vms - h.vms.len() < 1 {
            continue;
        }
        running -= 1;
        vms -= h.vms.len();
        chosen.push(h.id);
    }
    chosen
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsolidationPlan {
    pub migrations: Vec<(VmId, HostId)>,
    pub power_off: Vec<HostId>,
}

impl ConsolidationPlan {
    pub fn is_empty(&self) -> bool {
        self.power_off.is_empty()
    }
}

/// Repeatedly empties the powered-on host with the fewest VMs (lowest id on
/// ties) by first-fit migration of its idle VMs, until no host can be emptied
/// or only `min_hosts` remain.
pub fn consolidation_plan(dc: &Datacenter, min_hosts: usize) -> ConsolidationPlan {
    struct Slot {
        id: HostId,
        on: bool,
        free: f64,
        vms: Vec<(VmId, f64, bool)>,
    }
    let mut slots: Vec<Slot> = dc
        .hosts()
        .iter()
        .map(|h| Slot {
            id: h.id,
            on: h.powered_on,
            free: h.free_mips(),
            vms: h
                .vms
                .iter()
                .map(|v| {
                    let vm = dc.vm(*v).expect("host lists live VMs");
                    (vm.id, vm.vm_type.allocation_mips(), vm.is_idle())
                })
                .collect(),
        })
        .collect();
    let mut plan = ConsolidationPlan::default();
    let min_hosts = min_hosts.max(1);
    loop {
        let running = slots.iter().filter(|s| s.on).count();
        if running <= min_hosts {
            break;
        }
        let mut order: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].on).collect();
        order.sort_by(|&a, &b| slots[a].vms.len().cmp(&slots[b].vms.len()).then(slots[a].id.cmp(&slots[b].id)));
        let mut emptied = None;
        for src in order {
            if slots[src].vms.iter().any(|v| !v.2) {
                continue;
            }
            // Tentative first-fit on a copy of free capacities.
            let mut free: Vec<f64> = slots.iter().map(|s| s.free).collect();
            let mut moves = Vec::new();
            let mut ok = true;
            for &(vm, need, _) in &slots[src].vms {
                let target = slots
                    .iter()
                    .position(|s| s.on && s.id != slots[src].id && free[s.id] >= need);
                match target {
                    Some(t) => {
                        free[t] -= need;
                        moves.push((vm, need, t));
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                emptied = Some((src, moves));
                break;
            }
        }
        let Some((src, moves)) = emptied else { break };
        for (vm, need, t) in moves {
            slots[t].free -= need;
            slots[t].vms.push((vm, need, true));
            plan.migrations.push((vm, slots[t].id));
        }
        slots[src].vms.clear();
        slots[src].free = dc.host_spec().capacity_mips();
        slots[src].on = false;
        plan.power_off.push(slots[src].id);
    }
    plan
}

/// Policy the concurrency tactic moves to, if any.
pub fn concurrency_target(current: SchedulingPolicy) -> Option<SchedulingPolicy> {
    match current {
        SchedulingPolicy::MultiDynamicQueue => None,
        SchedulingPolicy::MultiQueue => Some(SchedulingPolicy::MultiDynamicQueue),
        _ => Some(SchedulingPolicy::MultiQueue),
    }
}

/// Next policy in the rotation that differs from `current`.
pub fn next_scheduling_policy(current: SchedulingPolicy, variations: &[SchedulingPolicy]) -> Option<SchedulingPolicy> {
    let start = variations.iter().position(|p| *p == current).map_or(0, |i| i + 1);
    (0..variations.len())
        .map(|k| variations[(start + k) % variations.len()])
        .find(|p| *p != current)
}

fn min_count(tactic: &AdaptationTactic) -> usize {
    tactic.min_limit.max(1) as usize
}

/// Largest step the tactic could take right now; 0 when infeasible. For
/// reconfiguration tactics the answer is 0 or 1. Consolidation reports how
/// many hosts its plan would switch off.
pub fn max_feasible_step(tactic: &AdaptationTactic, catalogue: &TacticsCatalogue, state: SystemState<'_>) -> u32 {
    let dc = state.dc;
    let cap = |n: usize| n.min(u32::MAX as usize) as u32;
    match tactic.kind {
        TacticKind::VerticalScaling => {
            let Ok(t) = dc.vm_type(&catalogue.scale_vm_type) else { return 0 };
            let mut n = provisionable_vms(dc, t);
            if let Some(max) = tactic.max_limit {
                n = n.min((max as usize).saturating_sub(dc.vm_count()));
            }
            cap(n)
        }
        TacticKind::VerticalDescaling => {
            let idle = dc.vms().filter(|v| v.is_idle()).count();
            cap(idle.min(dc.vm_count().saturating_sub(min_count(tactic))))
        }
        TacticKind::HorizontalScaling => {
            let mut n = powerable_hosts(dc);
            if let Some(max) = tactic.max_limit {
                n = n.min((max as usize).saturating_sub(dc.powered_on_hosts()));
            }
            cap(n)
        }
        TacticKind::HorizontalDescaling => cap(descaling_hosts(dc, min_count(tactic), usize::MAX).len()),
        TacticKind::Consolidation => cap(consolidation_plan(dc, min_count(tactic)).power_off.len()),
        TacticKind::Concurrency => u32::from(concurrency_target(state.policy).is_some()),
        TacticKind::DynamicScheduling => {
            u32::from(next_scheduling_policy(state.policy, &catalogue.scheduling_variations).is_some())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionOutcome {
    Applied,
    /// The state no longer permits the decision; nothing was changed.
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub tactic_id: String,
    pub magnitude: u32,
    pub outcome: ExecutionOutcome,
    pub hosts_before: usize,
    pub hosts_after: usize,
    pub vms_before: usize,
    pub vms_after: usize,
    pub policy_before: SchedulingPolicy,
    pub policy_after: SchedulingPolicy,
    /// Requests started because capacity changed.
    pub started: Vec<Started>,
}

impl ExecutionReport {
    pub fn applied(&self) -> bool {
        self.outcome == ExecutionOutcome::Applied
    }
}

/// Applies `decision`. A decision the current state no longer permits is
/// aborted and reported, not an error.
pub fn execute(
    decision: &AdaptationDecision,
    catalogue: &TacticsCatalogue,
    dc: &mut Datacenter,
    broker: &mut Broker,
    now: f64,
) -> Result<ExecutionReport, ExecutionError> {
    let tactic = catalogue
        .get(&decision.tactic_id)
        .ok_or_else(|| ExecutionError::UnknownTactic(decision.tactic_id.clone()))?;
    let mut report = ExecutionReport {
        tactic_id: decision.tactic_id.clone(),
        magnitude: decision.magnitude,
        outcome: ExecutionOutcome::Applied,
        hosts_before: dc.powered_on_hosts(),
        hosts_after: dc.powered_on_hosts(),
        vms_before: dc.vm_count(),
        vms_after: dc.vm_count(),
        policy_before: broker.policy(),
        policy_after: broker.policy(),
        started: Vec::new(),
    };
    let state = SystemState {
        dc,
        policy: broker.policy(),
    };
    let available = max_feasible_step(tactic, catalogue, state);
    let needed = match tactic.kind {
        TacticKind::Consolidation | TacticKind::Concurrency | TacticKind::DynamicScheduling => 1,
        _ => decision.magnitude.max(1),
    };
    if available < needed {
        report.outcome = ExecutionOutcome::Aborted(format!(
            "{} needs step {needed} but the current state allows {available}",
            tactic.tactic_id
        ));
        return Ok(report);
    }

    let step = needed as usize;
    match tactic.kind {
        TacticKind::VerticalScaling => {
            let t = dc.vm_type(&catalogue.scale_vm_type)?.clone();
            for _ in 0..step {
                dc.provision_vm(&t)?;
            }
        }
        TacticKind::VerticalDescaling => {
            let mut victims: Vec<VmId> = dc.vms().filter(|v| v.is_idle()).map(|v| v.id).collect();
            victims.reverse();
            victims.truncate(step);
            for vm in victims {
                dc.remove_vm(vm)?;
            }
        }
        TacticKind::HorizontalScaling => {
            let t = dc.vm_type(&catalogue.scale_vm_type)?.clone();
            for _ in 0..step {
                let host = dc.power_on_host()?;
                while dc.host(host)?.fits(t.allocation_mips()) {
                    dc.place_vm(&t, host)?;
                }
            }
        }
        TacticKind::HorizontalDescaling => {
            for host in descaling_hosts(dc, min_count(tactic), step) {
                let vms: Vec<VmId> = dc.host(host)?.vms.iter().copied().collect();
                for vm in vms {
                    dc.remove_vm(vm)?;
                }
                dc.set_host_power(host, false)?;
            }
        }
        TacticKind::Consolidation => {
            let plan = consolidation_plan(dc, min_count(tactic));
            for &(vm, target) in &plan.migrations {
                dc.migrate_vm(vm, target)?;
            }
            for &host in &plan.power_off {
                dc.set_host_power(host, false)?;
            }
            report.magnitude = plan.power_off.len() as u32;
        }
        TacticKind::Concurrency => {
            let target = concurrency_target(broker.policy()).expect("feasibility checked");
            broker.set_scheduling_policy(target, dc);
        }
        TacticKind::DynamicScheduling => {
            let target =
                next_scheduling_policy(broker.policy(), &catalogue.scheduling_variations).expect("feasibility checked");
            broker.set_scheduling_policy(target, dc);
        }
    }
    report.started = broker.sync_vms(dc, now)?;
    report.hosts_after = dc.powered_on_hosts();
    report.vms_after = dc.vm_count();
    report.policy_after = broker.policy();
    Ok(report)
}
