//! Acceptance suite. Runs with a custom harness so every criterion prints a
//! PASS/FAIL line; the process fails if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use adaptsim::adaptation::{
    detect, execute, AdaptationDecision, AdaptationEngine, MonitorSample, Selection, SystemState, Violation,
};
use adaptsim::awareness::{
    goal_act, meta_act, stimulus_act, time_select, weighted_satisfaction, AwarenessSettings, DecisionPath, PathStats,
};
use adaptsim::broker::{Broker, SchedulingPolicy, Started};
use adaptsim::config::{Deployment, ExperimentConfig};
use adaptsim::experiment::{run_experiment, run_pair, ExperimentOutcome};
use adaptsim::goals::QualityAttribute;
use adaptsim::metrics::{overhead_total, pooled_violation_percentage};
use adaptsim::mode::Mode;
use adaptsim::report::emit_report;
use adaptsim::sim::Simulation;
use adaptsim::workload::{Component, ServiceRequest};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Matrix {
    outcome: ExperimentOutcome,
    elapsed: Duration,
}

fn full_matrix() -> Matrix {
    let cfg = ExperimentConfig::reference();
    let t = Instant::now();
    let outcome = run_experiment(&cfg, &Mode::COMPARISON, &cfg.default_services());
    Matrix {
        outcome,
        elapsed: t.elapsed(),
    }
}

// 1
fn uncontended_exactness() -> Outcome {
    let cfg = ExperimentConfig::reference();
    let expected = [(1, 4.17), (2, 8.33), (3, 5.00), (4, 6.25), (5, 7.08)];
    let mut seen = Vec::new();
    for (service, want) in expected {
        let t = Instant::now();
        let run = run_pair(&cfg, Mode::NonAdaptive, service).map_err(|e| e.to_string())?;
        let elapsed = t.elapsed();
        let got = run.summary.avg_response.ok_or("no completions")?;
        ensure((got - want).abs() <= 0.01, || format!("service {service}: {got} vs {want}"))?;
        ensure(elapsed < Duration::from_secs(1), || format!("service {service} took {elapsed:?}"))?;
        seen.push(format!("{got:.2}"));
    }
    Ok(seen.join(" / "))
}

// 2
fn non_adaptive_flatness() -> Outcome {
    let cfg = ExperimentConfig::reference();
    for service in cfg.default_services() {
        let run = run_pair(&cfg, Mode::NonAdaptive, service).map_err(|e| e.to_string())?;
        let means: Vec<f64> = run.intervals.iter().filter_map(|i| i.avg_response).collect();
        ensure(means.len() == run.intervals.len(), || format!("service {service}: empty interval"))?;
        ensure(means.windows(2).all(|w| w[0] == w[1]), || {
            format!("service {service}: interval means differ: {means:?}")
        })?;
    }
    Ok("all interval means identical for every service".into())
}

// 3
fn cost_energy_dominance(m: &Matrix) -> Outcome {
    let s = &m.outcome.summaries;
    let mut worst = (0.0f64, 0.0f64);
    for svc in 1..=5 {
        let base = s
            .iter()
            .find(|x| x.mode == Mode::NonAdaptive && x.service == svc)
            .ok_or("missing baseline")?;
        for x in s.iter().filter(|x| x.service == svc && x.mode.is_adaptive()) {
            ensure(!x.is_failed(), || format!("{} {svc} failed", x.mode))?;
            ensure(x.energy_kwh <= base.energy_kwh, || {
                format!("{} service {svc}: energy {} > {}", x.mode, x.energy_kwh, base.energy_kwh)
            })?;
            ensure(x.cost_usd <= base.cost_usd, || {
                format!("{} service {svc}: cost {} > {}", x.mode, x.cost_usd, base.cost_usd)
            })?;
            worst.0 = worst.0.max(x.energy_kwh / base.energy_kwh);
            worst.1 = worst.1.max(x.cost_usd / base.cost_usd);
        }
    }
    Ok(format!(
        "max adaptive/baseline ratio: energy {:.3}, cost {:.3}",
        worst.0, worst.1
    ))
}

// 4
fn violation_ordering(m: &Matrix) -> Outcome {
    let cfg = ExperimentConfig::reference();
    let goals = cfg.goals_model().map_err(|e| e.to_string())?;
    let rt_limit = goals
        .goal_for(QualityAttribute::ResponseTime)
        .ok_or("no response-time goal")?
        .constraint_value;
    let pct = |mode: Mode, svc: u32| -> Result<f64, String> {
        m.outcome
            .summaries
            .iter()
            .find(|x| x.mode == mode && x.service == svc)
            .and_then(|x| x.violation_pct)
            .ok_or_else(|| format!("no violation % for {mode} {svc}"))
    };
    for svc in 1..=5 {
        let (g, s) = (pct(Mode::GoalAware, svc)?, pct(Mode::StimulusAware, svc)?);
        ensure(g <= s, || format!("service {svc}: goal-aware {g:.2} > stimulus-aware {s:.2}"))?;
    }
    let pooled = |mode: Mode| {
        let runs: Vec<_> = m.outcome.runs.iter().filter(|r| r.mode == mode).collect();
        let recs: Vec<_> = runs.iter().flat_map(|r| r.records.iter().cloned()).collect();
        pooled_violation_percentage(&recs, rt_limit)
    };
    let (g, s) = (pooled(Mode::GoalAware), pooled(Mode::StimulusAware));
    let (g, s) = (g.ok_or("no pooled goal-aware %")?, s.ok_or("no pooled stimulus-aware %")?);
    ensure(g <= s, || format!("pooled: goal-aware {g:.2} > stimulus-aware {s:.2}"))?;
    let (g2, s2) = (pct(Mode::GoalAware, 2)?, pct(Mode::StimulusAware, 2)?);
    let near = |x: f64, r: f64| if (x - r).abs() <= 15.0 { "within" } else { "outside" };
    Ok(format!(
        "pooled goal {g:.2}% <= stimulus {s:.2}%; service 2: {g2:.2}% ({} 15 pts of 24.40), {s2:.2}% ({} 15 pts of 28.86)",
        near(g2, 24.40),
        near(s2, 28.86)
    ))
}

// 5
fn overhead_ordering(m: &Matrix) -> Outcome {
    let total = |mode| overhead_total(&m.outcome.mode_ledger(mode));
    let (na, sa, st, ga) = (
        total(Mode::NonAdaptive),
        total(Mode::SelfAdaptive),
        total(Mode::StimulusAware),
        total(Mode::GoalAware),
    );
    let line = format!("goal {ga:.6}s, stimulus {st:.6}s, self {sa:.6}s, non-adaptive {na}s");
    ensure(na == 0.0, || format!("non-adaptive overhead is not zero: {line}"))?;
    ensure(sa > 0.0, || format!("self-adaptive overhead is zero: {line}"))?;
    ensure(ga >= st && st >= sa, || format!("ordering broken: {line}"))?;
    Ok(line)
}

fn request(id: u64, now: f64, rng: &mut ChaCha8Rng) -> ServiceRequest {
    let length = *[10_000.0, 20_000.0, 12_000.0, 15_000.0, 17_000.0].choose(rng).unwrap();
    ServiceRequest {
        id,
        service_type_id: 1,
        component: Component::Browsing,
        arrival_time: now,
        length,
        deadline: Some(now + 10.0 * length / 2400.0),
        user_id: None,
    }
}

// 6
fn limit_safety_fuzz() -> Outcome {
    let mut cfg = ExperimentConfig::reference();
    cfg.datacenter.max_hosts = 12;
    let cat = cfg.catalogue().map_err(|e| e.to_string())?;
    let mut events = 0u64;
    let mut applied = 0u64;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dc = cfg.build_datacenter(Mode::SelfAdaptive).map_err(|e| e.to_string())?;
        let mut broker = Broker::new(SchedulingPolicy::Fifo);
        let mut running: BTreeSet<u64> = BTreeSet::new();
        let mut now = 0.0;
        let mut next_id = 0;
        for step in 0..10_000 {
            let dt = rng.gen::<f64>() * 5.0;
            dc.accrue(dt);
            now += dt;
            let mut started: Vec<Started> = Vec::new();
            match rng.gen_range(0..10) {
                0..=3 => {
                    let r = request(next_id, now, &mut rng);
                    next_id += 1;
                    started.extend(broker.dispatch(&mut dc, r, now).map_err(|e| e.to_string())?);
                }
                4..=6 => {
                    if let Some(&id) = running.iter().nth(rng.gen_range(0..running.len().max(1))) {
                        running.remove(&id);
                        let (_, next) = broker.complete_request(&mut dc, id, now).map_err(|e| e.to_string())?;
                        started.extend(next);
                    }
                }
                _ => {
                    let tactic = cat.tactics.choose(&mut rng).unwrap();
                    let d = AdaptationDecision {
                        tactic_id: tactic.tactic_id.clone(),
                        magnitude: rng.gen_range(1..=4),
                        trigger: vec![QualityAttribute::ResponseTime],
                        decided_at: now,
                        decided_by: Mode::SelfAdaptive,
                        proactive: false,
                    };
                    let rep = execute(&d, &cat, &mut dc, &mut broker, now).map_err(|e| e.to_string())?;
                    applied += rep.applied() as u64;
                    started.extend(rep.started);
                }
            }
            running.extend(started.iter().map(|s| s.request_id));
            events += 1;
            let hosts = dc.powered_on_hosts();
            ensure((1..=12).contains(&hosts), || format!("seed {seed} step {step}: {hosts} hosts"))?;
            ensure(dc.vm_count() >= 1, || format!("seed {seed} step {step}: no VMs"))?;
            dc.check_invariants().map_err(|e| format!("seed {seed} step {step}: {e}"))?;
            ensure(dc.busy_vcpus() as usize == running.len(), || {
                format!("seed {seed} step {step}: busy vCPUs {} vs running {}", dc.busy_vcpus(), running.len())
            })?;
            ensure(
                broker.arrivals() == broker.completions() + broker.queued_len() as u64 + broker.running_len() as u64,
                || format!("seed {seed} step {step}: broker balance broken"),
            )?;
        }
    }
    Ok(format!("{events} events, {applied} applied tactics, 0 violations"))
}

// 7
fn conservation() -> Outcome {
    let cfg = ExperimentConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pauses = 0;
    for mode in Mode::ALL {
        for service in [2, 5] {
            let mut sim = Simulation::new(&cfg, mode, service).map_err(|e| e.to_string())?;
            let end = sim.end_time();
            let mut t = 0.0;
            while !sim.is_finished() {
                t = (t + rng.gen::<f64>() * 2000.0).min(end);
                sim.run_until(t).map_err(|e| e.to_string())?;
                let b = sim.request_balance();
                ensure(b.holds(), || format!("{mode} {service} at {t}: {b:?}"))?;
                pauses += 1;
            }
            let sum: f64 = sim.intervals().iter().map(|i| i.energy_kwh).sum();
            let total = sim.datacenter().total_energy();
            ensure((sum - total).abs() <= 1e-9 * total.abs(), || {
                format!("{mode} {service}: interval energy {sum} vs total {total}")
            })?;
            let csum: f64 = sim.intervals().iter().map(|i| i.cost_usd).sum();
            let ctotal = sim.datacenter().total_cost();
            ensure((csum - ctotal).abs() <= 1e-9 * ctotal.abs(), || {
                format!("{mode} {service}: interval cost {csum} vs total {ctotal}")
            })?;
        }
    }
    Ok(format!("{pauses} pauses checked"))
}

/// FIFO on identical vCPUs: each request, in arrival order, takes the vCPU
/// that frees up first.
fn fifo_oracle(requests: &[ServiceRequest], vcpus: usize, mips: f64) -> BTreeMap<u64, (f64, f64)> {
    let mut order: Vec<&ServiceRequest> = requests.iter().collect();
    order.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time).then(a.id.cmp(&b.id)));
    let mut free_at = vec![0.0f64; vcpus];
    let mut out = BTreeMap::new();
    for r in order {
        let (slot, &at) = free_at
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one vCPU");
        let start = r.arrival_time.max(at);
        let service = r.length / mips;
        free_at[slot] = start + service;
        out.insert(r.id, ((start - r.arrival_time) + service, start + service));
    }
    out
}

// 8
fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let types = ["m4.large", "m4.xlarge", "m4.2xlarge"];
    let mut checked = 0;
    for case in 0..300 {
        let mut cfg = ExperimentConfig::reference();
        let n: u64 = rng.gen_range(1..=20);
        let duration = [20.0, 40.0, 100.0][case % 3];
        cfg.trend = vec![n];
        cfg.workload.cap = n;
        cfg.workload.instance_duration = duration;
        cfg.controller.monitoring_frequency = duration;
        cfg.workload.arrival_window = Some(if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() * duration });
        cfg.seed = rng.gen();
        let mut vms = BTreeMap::new();
        for _ in 0..rng.gen_range(1..=2) {
            *vms.entry(types.choose(&mut rng).unwrap().to_string()).or_insert(0) += 1;
        }
        cfg.deployment.non_adaptive = Deployment { hosts: 2, vms };
        cfg.validate().map_err(|e| format!("case {case}: {e}"))?;
        let service = rng.gen_range(1..=5);

        let vcpus = cfg
            .deployment
            .non_adaptive
            .vms
            .iter()
            .map(|(name, count)| cfg.vm_types.iter().find(|t| &t.name == name).unwrap().vcpus * count)
            .sum::<u32>() as usize;
        let gen = adaptsim::workload::RequestGenerator::new(
            cfg.trace().map_err(|e| e.to_string())?,
            cfg.workload.service_types.clone(),
            adaptsim::workload::ServiceMix::single(service),
            cfg.seed,
        )
        .map_err(|e| e.to_string())?
        .with_arrival_window(cfg.workload.arrival_window());
        let requests = gen.generate_interval_requests(0, 0).map_err(|e| e.to_string())?;
        let expected = fifo_oracle(&requests, vcpus, 2400.0);

        let run = run_pair(&cfg, Mode::NonAdaptive, service).map_err(|e| e.to_string())?;
        let got: BTreeMap<u64, f64> = run.records.iter().map(|r| (r.request_id, r.response_time)).collect();
        for (id, (rt, finish)) in &expected {
            if *finish < duration {
                let g = got.get(id).ok_or_else(|| format!("case {case}: request {id} missing"))?;
                ensure(g == rt, || format!("case {case}: request {id}: {g} vs oracle {rt}"))?;
                checked += 1;
            } else if *finish > duration {
                ensure(!got.contains_key(id), || format!("case {case}: request {id} finished after the run"))?;
            }
        }
    }
    Ok(format!("{checked} response times equal to the oracle over 300 traces"))
}

// 9
fn determinism(m: &Matrix) -> Outcome {
    let cfg = ExperimentConfig::reference();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    emit_report(a.path(), &m.outcome, &Mode::COMPARISON).map_err(|e| e.to_string())?;
    let second = run_experiment(&cfg, &Mode::COMPARISON, &cfg.default_services());
    emit_report(b.path(), &second, &Mode::COMPARISON).map_err(|e| e.to_string())?;
    let files = csv_files(a.path());
    ensure(files.len() == 2 + 4 * 5 * 2, || format!("unexpected file count {}", files.len()))?;
    let mut compared = 0;
    for rel in &files {
        if rel.ends_with("overhead.csv") {
            continue;
        }
        let x = fs::read(a.path().join(rel)).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        ensure(x == y, || format!("{rel} differs between runs"))?;
        compared += 1;
    }
    ensure(m.elapsed < Duration::from_secs(300), || format!("matrix took {:?}", m.elapsed))?;
    Ok(format!("{compared} CSVs byte-identical; matrix in {:.2?}", m.elapsed))
}

fn csv_files(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

fn random_point(
    rng: &mut ChaCha8Rng,
    cfg: &ExperimentConfig,
) -> (adaptsim::cloud::Datacenter, SchedulingPolicy, MonitorSample, AdaptationEngine) {
    let cat = cfg.catalogue().unwrap();
    let mut dc = cfg.build_datacenter(Mode::SelfAdaptive).unwrap();
    let mut broker = Broker::new(SchedulingPolicy::Fifo);
    for _ in 0..rng.gen_range(0..6) {
        let t = cat.tactics.choose(rng).unwrap();
        let d = AdaptationDecision {
            tactic_id: t.tactic_id.clone(),
            magnitude: rng.gen_range(1..=3),
            trigger: vec![QualityAttribute::Cost],
            decided_at: 0.0,
            decided_by: Mode::SelfAdaptive,
            proactive: false,
        };
        execute(&d, &cat, &mut dc, &mut broker, 0.0).unwrap();
    }
    let policy = *SchedulingPolicy::ALL.choose(rng).unwrap();
    let vcpus = dc.total_vcpus();
    let sample = MonitorSample {
        time_instance: rng.gen_range(1..30) as f64 * 864.0,
        window_start: 0.0,
        avg_response_time: rng.gen_bool(0.9).then(|| rng.gen::<f64>() * 50.0),
        throughput: rng.gen_range(0..800),
        energy_kwh_interval: rng.gen::<f64>() * 1.8,
        cost_interval: rng.gen::<f64>() * 3.5,
        per_service: BTreeMap::new(),
        arrivals: rng.gen_range(0..800),
        peak_queue_depth: rng.gen_range(0..800),
        total_vcpus: vcpus,
        projection: 30.0,
    };
    let mut engine = AdaptationEngine::new();
    let attrs = [QualityAttribute::ResponseTime, QualityAttribute::Energy, QualityAttribute::Cost];
    for _ in 0..rng.gen_range(0..3) {
        let attr = *attrs.choose(rng).unwrap();
        let t = cat.tactics.choose(rng).unwrap();
        engine.note_executed(&t.tactic_id, attr);
        let v = Violation {
            goal_id: 1,
            attribute: attr,
            observed: 0.0,
            constraint: 0.0,
            weight: 0.5,
        };
        engine.observe(&[v]);
    }
    (dc, policy, sample, engine)
}

fn selection_key(s: &Selection) -> String {
    match s {
        Selection::NoViolation => "none".into(),
        Selection::NoFeasible(a) => format!("infeasible {a:?}"),
        Selection::Decision(d) => format!("{} x{} {:?} {}", d.tactic_id, d.magnitude, d.trigger, d.proactive),
    }
}

// 10
fn awareness_properties() -> Outcome {
    let cfg = ExperimentConfig::reference();
    let cat = cfg.catalogue().map_err(|e| e.to_string())?;
    let rules = cfg.rule_set(&cat).map_err(|e| e.to_string())?;
    let settings = AwarenessSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut decided, mut proactive) = (0, 0);
    for i in 0..1000 {
        let (dc, policy, sample, engine) = random_point(&mut rng, &cfg);
        let state = SystemState { dc: &dc, policy };
        let mut goals = cfg.goals_model().unwrap();
        let violations = detect(&sample, &mut goals);

        let stim = stimulus_act(&engine, &violations, &sample, &rules, &cat, state, &settings, Mode::StimulusAware);
        let time = time_select(&engine, &violations, &sample, &[], &rules, &cat, state, &settings, Mode::TimeAware);
        ensure(selection_key(&stim) == selection_key(&time), || {
            format!("point {i}: stimulus {} vs time {}", selection_key(&stim), selection_key(&time))
        })?;
        decided += matches!(stim, Selection::Decision(_)) as u32;

        let goal = goal_act(&engine, &violations, &sample, &goals, &rules, &cat, state, &settings, Mode::GoalAware);
        if let Selection::Decision(d) = &goal {
            if d.proactive {
                proactive += 1;
                for attr in &d.trigger {
                    ensure(!violations.iter().any(|v| v.attribute == *attr), || {
                        format!("point {i}: {attr:?} is both actual and predicted")
                    })?;
                }
            }
        }
    }

    let base = cfg.goals_model().unwrap();
    for i in 0..1000 {
        let factor = 10f64.powf(rng.gen_range(-3.0..3.0));
        let mut scaled = base.clone();
        for g in &mut scaled.goals {
            g.weight *= factor;
        }
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        for path in DecisionPath::ALL {
            if rng.gen_bool(0.1) {
                continue;
            }
            let obs = adaptsim::metrics::Observations {
                response_time: rng.gen_bool(0.9).then(|| rng.gen::<f64>() * 50.0),
                energy_kwh: rng.gen::<f64>() * 1.8,
                cost_usd: rng.gen::<f64>() * 3.5,
                throughput: 0.0,
                projection: 30.0,
            };
            let work = rng.gen_range(1..6) as f64;
            let sa = weighted_satisfaction(&base, &obs).unwrap_or(0.0);
            let sb = weighted_satisfaction(&scaled, &obs).unwrap_or(0.0);
            a.insert(path, PathStats { satisfaction: sa, work });
            b.insert(path, PathStats { satisfaction: sb, work });
        }
        let current = *DecisionPath::ALL.choose(&mut rng).unwrap();
        let (pa, pb) = (meta_act(&a, current, 0.1), meta_act(&b, current, 0.1));
        ensure(pa == pb, || format!("scaling {factor}: {pa:?} vs {pb:?} at draw {i}"))?;
    }
    Ok(format!(
        "1000 points: {decided} decisions identical, {proactive} proactive disjoint; 1000 weight scalings invariant"
    ))
}

fn main() -> ExitCode {
    let matrix = full_matrix();
    let criteria: Vec<(&str, Check)> = vec![
        ("uncontended response-time exactness", Box::new(uncontended_exactness)),
        ("non-adaptive flatness", Box::new(non_adaptive_flatness)),
        ("cost/energy dominance", Box::new(|| cost_energy_dominance(&matrix))),
        ("violation ordering", Box::new(|| violation_ordering(&matrix))),
        ("overhead ordering", Box::new(|| overhead_ordering(&matrix))),
        ("limit-safety fuzz", Box::new(limit_safety_fuzz)),
        ("conservation", Box::new(conservation)),
        ("FIFO oracle equivalence", Box::new(oracle_equivalence)),
        ("determinism and runtime", Box::new(|| determinism(&matrix))),
        ("awareness-path properties", Box::new(awareness_properties)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
