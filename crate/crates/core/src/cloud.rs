//! The managed system: hosts, virtual machines, power draw and cost accrual.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type HostId = usize;
pub type VmId = u64;

const JOULES_PER_KWH: f64 = 3.6e6;
const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("no capacity left for a {vm_type} VM ({max_hosts} hosts max)")]
    CapacityExhausted { vm_type: String, max_hosts: usize },
    #[error("migration of VM {vm} to host {target} refused: {reason}")]
    MigrationRefused { vm: VmId, target: HostId, reason: &'static str },
    #[error("power-off of host {host} refused: {reason}")]
    PowerOffRefused { host: HostId, reason: &'static str },
    #[error("utilization {0} outside [0, 1]")]
    UtilizationOutOfRange(f64),
    #[error("unknown host {0}")]
    UnknownHost(HostId),
    #[error("unknown VM {0}")]
    UnknownVm(VmId),
    #[error("unknown VM type {0:?}")]
    UnknownVmType(String),
    #[error("VM {0} has running requests")]
    VmBusy(VmId),
    #[error("VM {0} has no free vCPU")]
    NoFreeVcpu(VmId),
    #[error("VM {0} has no busy vCPU to release")]
    NoBusyVcpu(VmId),
    #[error("host {host} cannot fit {mips} MIPS")]
    HostFull { host: HostId, mips: f64 },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub cores: u32,
    pub mips_per_core: f64,
    #[serde(default)]
    pub ram_gb: f64,
    pub idle_power: f64,
    pub max_power: f64,
}

impl HostSpec {
    pub fn capacity_mips(&self) -> f64 {
        self.cores as f64 * self.mips_per_core
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        if self.cores < 1 {
            return Err(CloudError::InvalidSpec("host cores must be >= 1".into()));
        }
        if !(self.mips_per_core > 0.0) {
            return Err(CloudError::InvalidSpec("host mips_per_core must be > 0".into()));
        }
        if !(self.idle_power >= 0.0 && self.idle_power <= self.max_power) {
            return Err(CloudError::InvalidSpec(
                "host power must satisfy 0 <= idle_power <= max_power".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmType {
    pub name: String,
    pub vcpus: u32,
    pub mips_per_vcpu: f64,
    #[serde(default)]
    pub ram_gb: f64,
    /// Dollars per hour.
    pub cost_rate: f64,
}

impl VmType {
    pub fn allocation_mips(&self) -> f64 {
        self.vcpus as f64 * self.mips_per_vcpu
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        if self.vcpus < 1 {
            return Err(CloudError::InvalidSpec(format!("VM type {}: vcpus must be >= 1", self.name)));
        }
        if !(self.mips_per_vcpu > 0.0) {
            return Err(CloudError::InvalidSpec(format!(
                "VM type {}: mips_per_vcpu must be > 0",
                self.name
            )));
        }
        if !(self.cost_rate > 0.0) {
            return Err(CloudError::InvalidSpec(format!("VM type {}: cost_rate must be > 0", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Host {
    pub id: HostId,
    pub spec: HostSpec,
    pub powered_on: bool,
    pub vms: BTreeSet<VmId>,
    /// kWh.
    pub energy_used: f64,
    allocated_mips: f64,
    busy_mips: f64,
}

impl Host {
    fn new(id: HostId, spec: HostSpec) -> Self {
        Host {
            id,
            spec,
            powered_on: false,
            vms: BTreeSet::new(),
            energy_used: 0.0,
            allocated_mips: 0.0,
            busy_mips: 0.0,
        }
    }

    pub fn capacity_mips(&self) -> f64 {
        self.spec.capacity_mips()
    }

    pub fn allocated_mips(&self) -> f64 {
        self.allocated_mips
    }

    pub fn free_mips(&self) -> f64 {
        self.capacity_mips() - self.allocated_mips
    }

    pub fn fits(&self, mips: f64) -> bool {
        self.powered_on && self.allocated_mips + mips <= self.capacity_mips()
    }

    /// Busy MIPS over capacity MIPS.
    pub fn utilization(&self) -> f64 {
        (self.busy_mips / self.capacity_mips()).clamp(0.0, 1.0)
    }

    pub fn power_draw(&self) -> f64 {
        if !self.powered_on {
            return 0.0;
        }
        linear_power(&self.spec, self.utilization())
    }
}

fn linear_power(spec: &HostSpec, utilization: f64) -> f64 {
    spec.idle_power + utilization * (spec.max_power - spec.idle_power)
}

/// Power in watts of `host` at the given CPU utilization.
pub fn host_power_draw(host: &Host, utilization: f64) -> Result<f64, CloudError> {
    if !(0.0..=1.0).contains(&utilization) {
        return Err(CloudError::UtilizationOutOfRange(utilization));
    }
    if !host.powered_on {
        return Ok(0.0);
    }
    Ok(linear_power(&host.spec, utilization))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vm {
    pub id: VmId,
    pub vm_type: VmType,
    pub host_id: HostId,
    pub busy_vcpus: u32,
    /// Dollars.
    pub cost_accrued: f64,
}

impl Vm {
    pub fn free_vcpus(&self) -> u32 {
        self.vm_type.vcpus - self.busy_vcpus
    }

    pub fn is_idle(&self) -> bool {
        self.busy_vcpus == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datacenter {
    host_spec: HostSpec,
    hosts: Vec<Host>,
    max_hosts: usize,
    vm_catalog: Vec<VmType>,
    vms: BTreeMap<VmId, Vm>,
    next_vm_id: VmId,
    total_energy: f64,
    total_cost: f64,
}

impl Datacenter {
    pub fn new(host_spec: HostSpec, max_hosts: usize, vm_catalog: Vec<VmType>) -> Result<Self, CloudError> {
        host_spec.validate()?;
        if max_hosts < 1 {
            return Err(CloudError::InvalidSpec("max_hosts must be >= 1".into()));
        }
        for t in &vm_catalog {
            t.validate()?;
        }
        Ok(Datacenter {
            host_spec,
            hosts: Vec::new(),
            max_hosts,
            vm_catalog,
            vms: BTreeMap::new(),
            next_vm_id: 0,
            total_energy: 0.0,
            total_cost: 0.0,
        })
    }

    pub fn host_spec(&self) -> &HostSpec {
        &self.host_spec
    }

    pub fn max_hosts(&self) -> usize {
        self.max_hosts
    }

    /// Hosts that have been powered on at least once, by ascending id.
    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }

    pub fn host(&self, id: HostId) -> Result<&Host, CloudError> {
        self.hosts.get(id).ok_or(CloudError::UnknownHost(id))
    }

    pub fn vm(&self, id: VmId) -> Result<&Vm, CloudError> {
        self.vms.get(&id).ok_or(CloudError::UnknownVm(id))
    }

    pub fn vms(&self) -> impl Iterator<Item = &Vm> {
        self.vms.values()
    }

    pub fn vm_catalog(&self) -> &[VmType] {
        &self.vm_catalog
    }

    pub fn vm_type(&self, name: &str) -> Result<&VmType, CloudError> {
        self.vm_catalog
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CloudError::UnknownVmType(name.to_string()))
    }

    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn powered_on_hosts(&self) -> usize {
        self.hosts.iter().filter(|h| h.powered_on).count()
    }

    pub fn vm_count(&self) -> usize {
        self.vms.len()
    }

    pub fn total_vcpus(&self) -> u32 {
        self.vms.values().map(|v| v.vm_type.vcpus).sum()
    }

    pub fn busy_vcpus(&self) -> u32 {
        self.vms.values().map(|v| v.busy_vcpus).sum()
    }

    /// Dollars per hour across all live VMs.
    pub fn cost_rate(&self) -> f64 {
        self.vms.values().map(|v| v.vm_type.cost_rate).sum()
    }

    /// Whether one more VM of `vm_type` could be provisioned right now.
    pub fn can_provision(&self, vm_type: &VmType) -> bool {
        let need = vm_type.allocation_mips();
        if need > self.host_spec.capacity_mips() {
            return false;
        }
        self.hosts.iter().any(|h| h.fits(need) || !h.powered_on) || self.hosts.len() < self.max_hosts
    }

    /// Whether another host can be switched on.
    pub fn can_power_on_host(&self) -> bool {
        self.hosts.iter().any(|h| !h.powered_on) || self.hosts.len() < self.max_hosts
    }

    /// Adds energy and cost for `dt` seconds at the current utilization.
    pub fn accrue(&mut self, dt: f64) {
        if !(dt > 0.0) {
            return;
        }
        for host in self.hosts.iter_mut().filter(|h| h.powered_on) {
            let kwh = host.power_draw() * dt / JOULES_PER_KWH;
            host.energy_used += kwh;
            self.total_energy += kwh;
        }
        for vm in self.vms.values_mut() {
            let dollars = vm.vm_type.cost_rate * dt / SECONDS_PER_HOUR;
            vm.cost_accrued += dollars;
            self.total_cost += dollars;
        }
    }

    /// Powers on the lowest-id powered-off host, materialising a new one if needed.
    pub fn power_on_host(&mut self) -> Result<HostId, CloudError> {
        if let Some(h) = self.hosts.iter_mut().find(|h| !h.powered_on) {
            h.powered_on = true;
            return Ok(h.id);
        }
        if self.hosts.len() >= self.max_hosts {
            return Err(CloudError::CapacityExhausted {
                vm_type: "host".into(),
                max_hosts: self.max_hosts,
            });
        }
        let id = self.hosts.len();
        let mut host = Host::new(id, self.host_spec.clone());
        host.powered_on = true;
        self.hosts.push(host);
        Ok(id)
    }

    pub fn set_host_power(&mut self, host: HostId, on: bool) -> Result<(), CloudError> {
        let running = self.powered_on_hosts();
        let h = self.hosts.get_mut(host).ok_or(CloudError::UnknownHost(host))?;
        if on {
            h.powered_on = true;
            return Ok(());
        }
        if !h.powered_on {
            return Ok(());
        }
        if !h.vms.is_empty() {
            return Err(CloudError::PowerOffRefused {
                host,
                reason: "host still runs VMs",
            });
        }
        if running <= 1 {
            return Err(CloudError::PowerOffRefused {
                host,
                reason: "at least one host must stay powered on",
            });
        }
        h.powered_on = false;
        Ok(())
    }

    /// Places a new VM on a specific powered-on host.
    pub fn place_vm(&mut self, vm_type: &VmType, host: HostId) -> Result<VmId, CloudError> {
        let need = vm_type.allocation_mips();
        let h = self.hosts.get_mut(host).ok_or(CloudError::UnknownHost(host))?;
        if !h.fits(need) {
            return Err(CloudError::HostFull { host, mips: need });
        }
        h.allocated_mips += need;
        let id = self.next_vm_id;
        self.next_vm_id += 1;
        h.vms.insert(id);
        self.vms.insert(
            id,
            Vm {
                id,
                vm_type: vm_type.clone(),
                host_id: host,
                busy_vcpus: 0,
                cost_accrued: 0.0,
            },
        );
        Ok(id)
    }

    /// First-fit placement by ascending host id, powering on a host when none fits.
    pub fn provision_vm(&mut self, vm_type: &VmType) -> Result<VmId, CloudError> {
        let need = vm_type.allocation_mips();
        let exhausted = || CloudError::CapacityExhausted {
            vm_type: vm_type.name.clone(),
            max_hosts: self.max_hosts,
        };
        if need > self.host_spec.capacity_mips() {
            return Err(exhausted());
        }
        if let Some(host) = self.hosts.iter().find(|h| h.fits(need)).map(|h| h.id) {
            return self.place_vm(vm_type, host);
        }
        if !self.can_power_on_host() {
            return Err(exhausted());
        }
        let host = self.power_on_host()?;
        self.place_vm(vm_type, host)
    }

    /// Destroys an idle VM. The host stays powered on.
    pub fn remove_vm(&mut self, vm: VmId) -> Result<Vm, CloudError> {
        let v = self.vms.get(&vm).ok_or(CloudError::UnknownVm(vm))?;
        if !v.is_idle() {
            return Err(CloudError::VmBusy(vm));
        }
        let v = self.vms.remove(&vm).expect("checked above");
        let h = &mut self.hosts[v.host_id];
        h.vms.remove(&vm);
        h.allocated_mips -= v.vm_type.allocation_mips();
        if h.vms.is_empty() {
            h.allocated_mips = 0.0;
        }
        Ok(v)
    }

    /// Moves an idle VM to `target`. Migration is instantaneous and free.
    pub fn migrate_vm(&mut self, vm: VmId, target: HostId) -> Result<(), CloudError> {
        let v = self.vms.get(&vm).ok_or(CloudError::UnknownVm(vm))?;
        if !v.is_idle() {
            return Err(CloudError::MigrationRefused {
                vm,
                target,
                reason: "VM has in-flight requests",
            });
        }
        let source = v.host_id;
        let need = v.vm_type.allocation_mips();
        let t = self.hosts.get(target).ok_or(CloudError::UnknownHost(target))?;
        if source == target {
            return Ok(());
        }
        if !t.powered_on {
            return Err(CloudError::MigrationRefused {
                vm,
                target,
                reason: "target host is powered off",
            });
        }
        if !t.fits(need) {
            return Err(CloudError::MigrationRefused {
                vm,
                target,
                reason: "target lacks free capacity",
            });
        }
        let src = &mut self.hosts[source];
        src.vms.remove(&vm);
        src.allocated_mips -= need;
        if src.vms.is_empty() {
            src.allocated_mips = 0.0;
        }
        let dst = &mut self.hosts[target];
        dst.vms.insert(vm);
        dst.allocated_mips += need;
        self.vms.get_mut(&vm).expect("checked above").host_id = target;
        Ok(())
    }

    pub fn occupy_vcpu(&mut self, vm: VmId) -> Result<(), CloudError> {
        let v = self.vms.get_mut(&vm).ok_or(CloudError::UnknownVm(vm))?;
        if v.busy_vcpus >= v.vm_type.vcpus {
            return Err(CloudError::NoFreeVcpu(vm));
        }
        v.busy_vcpus += 1;
        self.hosts[v.host_id].busy_mips += v.vm_type.mips_per_vcpu;
        Ok(())
    }

    pub fn release_vcpu(&mut self, vm: VmId) -> Result<(), CloudError> {
        let v = self.vms.get_mut(&vm).ok_or(CloudError::UnknownVm(vm))?;
        if v.busy_vcpus == 0 {
            return Err(CloudError::NoBusyVcpu(vm));
        }
        v.busy_vcpus -= 1;
        let host = &mut self.hosts[v.host_id];
        host.busy_mips -= v.vm_type.mips_per_vcpu;
        if host.vms.iter().all(|id| self.vms[id].busy_vcpus == 0) {
            host.busy_mips = 0.0;
        }
        Ok(())
    }

    /// Checks allocation bookkeeping against the VM table. Used by tests and fuzzers.
    pub fn check_invariants(&self) -> Result<(), String> {
        for h in &self.hosts {
            let alloc: f64 = h.vms.iter().map(|id| self.vms[id].vm_type.allocation_mips()).sum();
            if alloc > h.capacity_mips() + 1e-6 {
                return Err(format!("host {} oversubscribed: {alloc} > {}", h.id, h.capacity_mips()));
            }
            if (alloc - h.allocated_mips).abs() > 1e-6 {
                return Err(format!("host {} allocation drift", h.id));
            }
            if !h.powered_on && !h.vms.is_empty() {
                return Err(format!("powered-off host {} hosts VMs", h.id));
            }
        }
        for v in self.vms.values() {
            if v.busy_vcpus > v.vm_type.vcpus {
                return Err(format!("VM {} busy beyond its vCPUs", v.id));
            }
            let h = &self.hosts[v.host_id];
            if !h.powered_on || !h.vms.contains(&v.id) {
                return Err(format!("VM {} points at an invalid host", v.id));
            }
        }
        Ok(())
    }
}
