//! The bundled reference setup, checked field by field.

use adaptsim::adaptation::{AffectedObject, Change, TacticKind};
use adaptsim::broker::SchedulingPolicy;
use adaptsim::config::ExperimentConfig;
use adaptsim::goals::{Objective, QualityAttribute};
use adaptsim::mode::Mode;
use adaptsim::workload::Pattern;

#[test]
fn goals_match_reference_table() {
    let cfg = ExperimentConfig::reference();
    let got: Vec<_> = cfg
        .goals
        .iter()
        .map(|g| (g.name.as_str(), g.attribute, g.weight, g.metric.as_str(), g.constraint_value, g.objective))
        .collect();
    assert_eq!(
        got,
        vec![
            ("Response time", QualityAttribute::ResponseTime, 0.5, "ms", 25.0, Objective::Minimise),
            ("Greenability", QualityAttribute::Energy, 0.2, "kWh", 25.0, Objective::Minimise),
            ("Operational cost", QualityAttribute::Cost, 0.2, "$", 50.0, Objective::Minimise),
        ]
    );
}

#[test]
fn tactics_match_reference_table() {
    let cat = ExperimentConfig::reference().catalogue().unwrap();
    let got: Vec<_> = cat
        .tactics
        .iter()
        .map(|t| (t.kind, t.affected_object, t.change, t.is_scaling().then_some(t.min_limit)))
        .collect();
    use AffectedObject::*;
    use Change::*;
    assert_eq!(
        got,
        vec![
            (TacticKind::VerticalScaling, Vm, Increase, Some(1)),
            (TacticKind::VerticalDescaling, Vm, Decrease, Some(1)),
            (TacticKind::HorizontalScaling, Host, Increase, Some(1)),
            (TacticKind::HorizontalDescaling, Host, Decrease, Some(1)),
            (TacticKind::Consolidation, Host, Decrease, Some(1)),
            (TacticKind::Concurrency, Scheduler, Reconfigure, None),
            (TacticKind::DynamicScheduling, Scheduler, Reconfigure, None),
        ]
    );
    assert_eq!(
        cat.scheduling_variations,
        vec![
            SchedulingPolicy::EarliestDeadlineFirst,
            SchedulingPolicy::LeastSlackTime,
            SchedulingPolicy::SingleQueue,
            SchedulingPolicy::MultiQueue,
            SchedulingPolicy::MultiDynamicQueue,
        ]
    );
}

#[test]
fn rules_match_reference_table() {
    let cfg = ExperimentConfig::reference();
    let cat = cfg.catalogue().unwrap();
    let kind = |id: &str| cat.get(id).unwrap().kind;
    let got: Vec<_> = cfg
        .rules
        .iter()
        .map(|r| (kind(&r.tactic_id), r.quality_attribute, r.priority))
        .collect();
    use QualityAttribute::*;
    use TacticKind::*;
    assert_eq!(
        got,
        vec![
            (DynamicScheduling, ResponseTime, 1),
            (Concurrency, ResponseTime, 2),
            (VerticalScaling, ResponseTime, 3),
            (HorizontalScaling, ResponseTime, 4),
            (Consolidation, Cost, 1),
            (VerticalDescaling, Cost, 2),
            (HorizontalDescaling, Cost, 3),
            (Consolidation, Energy, 1),
            (VerticalDescaling, Energy, 2),
            (HorizontalDescaling, Energy, 3),
        ]
    );
}

#[test]
fn service_types_match_reference_table() {
    let cfg = ExperimentConfig::reference();
    let got: Vec<_> = cfg
        .workload
        .service_types
        .iter()
        .map(|s| (s.id, s.pattern, s.required_mi))
        .collect();
    assert_eq!(
        got,
        vec![
            (1, Pattern::Browsing, 10_000.0),
            (2, Pattern::Bidding, 20_000.0),
            (3, Pattern::Mixed { browsing_pct: 70.0 }, 12_000.0),
            (4, Pattern::Mixed { browsing_pct: 50.0 }, 15_000.0),
            (5, Pattern::Mixed { browsing_pct: 30.0 }, 17_000.0),
        ]
    );
    assert_eq!(cfg.workload.cap, 700);
    assert_eq!(cfg.workload.instance_duration, 864.0);
}

#[test]
fn infrastructure_and_deployments_match_reference() {
    let cfg = ExperimentConfig::reference();
    let h = &cfg.datacenter.host;
    assert_eq!((h.cores, h.mips_per_core, h.ram_gb), (12, 3067.0, 256.0));
    assert_eq!(cfg.datacenter.max_hosts, 1000);
    let vms: Vec<_> = cfg
        .vm_types
        .iter()
        .map(|t| (t.name.as_str(), t.vcpus, t.mips_per_vcpu, t.ram_gb, t.cost_rate))
        .collect();
    assert_eq!(
        vms,
        vec![
            ("m4.large", 2, 2400.0, 8.0, 0.1),
            ("m4.xlarge", 4, 2400.0, 16.0, 0.2),
            ("m4.2xlarge", 8, 2400.0, 32.0, 0.4),
        ]
    );

    let na = cfg.build_datacenter(Mode::NonAdaptive).unwrap();
    assert_eq!((na.powered_on_hosts(), na.vm_count()), (70, 210));
    assert!(na.vms().all(|v| v.vm_type.name == "m4.xlarge"));

    let ad = cfg.build_datacenter(Mode::GoalAware).unwrap();
    assert_eq!((ad.powered_on_hosts(), ad.vm_count()), (10, 15));
    for name in ["m4.large", "m4.xlarge", "m4.2xlarge"] {
        assert_eq!(ad.vms().filter(|v| v.vm_type.name == name).count(), 5, "{name}");
    }
}

#[test]
fn bundled_trace_peaks_at_the_cap() {
    let cfg = ExperimentConfig::reference();
    let trace = cfg.trace().unwrap();
    assert_eq!(trace.len(), 30);
    assert_eq!(*trace.counts.iter().max().unwrap(), 700);
}
