//! Self-awareness capabilities layered over the reactive engine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::engine::attributes_by_weight;
use crate::adaptation::{
    predict, AdaptationDecision, AdaptationEngine, Candidate, MonitorSample, RuleSet, Selection, SystemState,
    TacticsCatalogue, Violation,
};
use crate::goals::{GoalHistoryRecord, GoalsModel, Objective, QualityAttribute};
use crate::metrics::{Observations, RunningMean};
use crate::mode::Mode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AwarenessError {
    #[error("level {0:?} requires stimulus awareness")]
    MissingStimulus(AwarenessLevel),
    #[error("mode {mode} is inconsistent with levels {levels:?}")]
    ModeMismatch { mode: Mode, levels: Vec<AwarenessLevel> },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AwarenessLevel {
    Stimulus,
    Goal,
    Time,
    Interaction,
    Meta,
}

/// The decision paths meta-awareness switches between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionPath {
    Stimulus,
    Goal,
    Time,
}

impl DecisionPath {
    pub const ALL: [DecisionPath; 3] = [DecisionPath::Stimulus, DecisionPath::Goal, DecisionPath::Time];

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionPath::Stimulus => "stimulus",
            DecisionPath::Goal => "goal",
            DecisionPath::Time => "time",
        }
    }
}

/// Tunables shared by all awareness levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AwarenessSettings {
    /// Queue depth above `queue_step_factor * vCPUs` doubles the step.
    pub queue_step_factor: f64,
    /// Relative load band for time-awareness history matching.
    pub context_tolerance: f64,
    /// Meta-awareness evaluation period in ticks.
    pub meta_period: u32,
    /// Weight of normalised controller work in the meta score.
    pub meta_overhead_penalty: f64,
}

impl Default for AwarenessSettings {
    fn default() -> Self {
        AwarenessSettings {
            queue_step_factor: 2.0,
            context_tolerance: 0.25,
            meta_period: 5,
            meta_overhead_penalty: 0.1,
        }
    }
}

impl AwarenessSettings {
    pub fn validate(&self) -> Result<(), AwarenessError> {
        if !(self.queue_step_factor > 0.0) {
            return Err(AwarenessError::Invalid("queue_step_factor must be > 0".into()));
        }
        if !(self.context_tolerance >= 0.0) {
            return Err(AwarenessError::Invalid("context_tolerance must be >= 0".into()));
        }
        if self.meta_period == 0 {
            return Err(AwarenessError::Invalid("meta_period must be >= 1".into()));
        }
        if !(self.meta_overhead_penalty >= 0.0) {
            return Err(AwarenessError::Invalid("meta_overhead_penalty must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AwarenessConfig {
    pub mode: Mode,
    levels: BTreeSet<AwarenessLevel>,
    pub settings: AwarenessSettings,
}

impl AwarenessConfig {
    pub fn new(
        mode: Mode,
        levels: BTreeSet<AwarenessLevel>,
        settings: AwarenessSettings,
    ) -> Result<Self, AwarenessError> {
        settings.validate()?;
        if let Some(l) = levels.iter().find(|l| **l != AwarenessLevel::Stimulus) {
            if !levels.contains(&AwarenessLevel::Stimulus) {
                return Err(AwarenessError::MissingStimulus(*l));
            }
        }
        let required = Self::levels_for(mode);
        let consistent = match mode {
            Mode::NonAdaptive | Mode::SelfAdaptive => levels.is_empty(),
            _ => required.is_subset(&levels),
        };
        if !consistent {
            return Err(AwarenessError::ModeMismatch {
                mode,
                levels: levels.into_iter().collect(),
            });
        }
        Ok(AwarenessConfig { mode, levels, settings })
    }

    pub fn for_mode(mode: Mode, settings: AwarenessSettings) -> Result<Self, AwarenessError> {
        Self::new(mode, Self::levels_for(mode), settings)
    }

    fn levels_for(mode: Mode) -> BTreeSet<AwarenessLevel> {
        use AwarenessLevel::*;
        match mode {
            Mode::NonAdaptive | Mode::SelfAdaptive => BTreeSet::new(),
            Mode::StimulusAware => [Stimulus].into(),
            Mode::GoalAware => [Stimulus, Goal].into(),
            Mode::TimeAware => [Stimulus, Time].into(),
            Mode::MetaAware => [Stimulus, Goal, Time, Meta].into(),
        }
    }

    pub fn has(&self, level: AwarenessLevel) -> bool {
        self.levels.contains(&level)
    }

    pub fn levels(&self) -> &BTreeSet<AwarenessLevel> {
        &self.levels
    }
}

/// Step 2 when the window's deepest queue exceeded `factor` times the vCPUs, else 1.
pub fn queue_step(sample: &MonitorSample, factor: f64) -> u32 {
    if sample.peak_queue_depth as f64 > factor * sample.total_vcpus as f64 {
        2
    } else {
        1
    }
}

/// Reactive decision with the step sized by queue depth.
#[allow(clippy::too_many_arguments)]
pub fn stimulus_act(
    engine: &AdaptationEngine,
    violations: &[Violation],
    sample: &MonitorSample,
    rules: &RuleSet,
    catalogue: &TacticsCatalogue,
    state: SystemState<'_>,
    settings: &AwarenessSettings,
    decided_by: Mode,
) -> Selection {
    let step = queue_step(sample, settings.queue_step_factor);
    engine.select_tactic(violations, rules, catalogue, state, step, sample.time_instance, decided_by)
}

/// Runs `stimulus_act`; with no actual violation, issues a proactive scaling
/// decision for the highest-weight goal past its trip line.
#[allow(clippy::too_many_arguments)]
pub fn goal_act(
    engine: &AdaptationEngine,
    violations: &[Violation],
    sample: &MonitorSample,
    goals: &GoalsModel,
    rules: &RuleSet,
    catalogue: &TacticsCatalogue,
    state: SystemState<'_>,
    settings: &AwarenessSettings,
    decided_by: Mode,
) -> Selection {
    let reactive = stimulus_act(engine, violations, sample, rules, catalogue, state, settings, decided_by);
    if !matches!(reactive, Selection::NoViolation) {
        return reactive;
    }
    let predicted = predict(sample, goals);
    let step = queue_step(sample, settings.queue_step_factor);
    for attr in attributes_by_weight(&predicted) {
        let cands = engine.candidates(attr, rules, catalogue, state, true);
        if let Some(c) = cands.first() {
            return Selection::Decision(AdaptationEngine::decide(
                c,
                attr,
                &[attr],
                catalogue,
                step,
                sample.time_instance,
                decided_by,
                true,
            ));
        }
    }
    Selection::NoViolation
}

/// Observed effect of one executed tactic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticOutcomeRecord {
    pub tactic_id: String,
    pub attribute: QualityAttribute,
    pub objective: Objective,
    pub value_before: f64,
    pub value_after: f64,
    pub time_instance: f64,
    /// Requests that arrived in the window the decision was made on.
    pub context_load: u64,
}

impl TacticOutcomeRecord {
    /// Positive when the attribute moved towards its goal. Not clamped.
    pub fn relative_improvement(&self) -> f64 {
        if self.value_before == 0.0 {
            return 0.0;
        }
        let delta = match self.objective {
            Objective::Minimise => self.value_before - self.value_after,
            Objective::Maximise => self.value_after - self.value_before,
        };
        delta / self.value_before.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticScore {
    pub tactic_id: String,
    pub mean_improvement: f64,
    pub samples: u64,
}

fn in_context(record_load: u64, load: u64, tolerance: f64) -> bool {
    (record_load as f64 - load as f64).abs() <= tolerance * load as f64
}

/// Mean relative improvement per tactic for `attribute`, over records whose
/// load lies within `tolerance` of `load`.
pub fn tactic_scores(
    history: &[TacticOutcomeRecord],
    attribute: QualityAttribute,
    load: u64,
    tolerance: f64,
) -> BTreeMap<String, TacticScore> {
    let mut means: BTreeMap<String, RunningMean> = BTreeMap::new();
    for r in history
        .iter()
        .filter(|r| r.attribute == attribute && in_context(r.context_load, load, tolerance))
    {
        means.entry(r.tactic_id.clone()).or_default().push(r.relative_improvement());
    }
    means
        .into_iter()
        .map(|(id, m)| {
            let score = TacticScore {
                tactic_id: id.clone(),
                mean_improvement: m.mean().unwrap_or(0.0),
                samples: m.count(),
            };
            (id, score)
        })
        .collect()
}

/// Index of the best candidate by historical score. Candidates arrive in rule
/// priority order; unseen tactics score 0 and ties keep that order.
pub fn time_act(
    candidates: &[Candidate],
    history: &[TacticOutcomeRecord],
    attribute: QualityAttribute,
    load: u64,
    tolerance: f64,
) -> Option<usize> {
    let scores = tactic_scores(history, attribute, load, tolerance);
    let score = |c: &Candidate| scores.get(&c.tactic_id).map_or(0.0, |s| s.mean_improvement);
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = score(c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Time-aware selection: rule candidates re-ranked by `time_act`.
#[allow(clippy::too_many_arguments)]
pub fn time_select(
    engine: &AdaptationEngine,
    violations: &[Violation],
    sample: &MonitorSample,
    history: &[TacticOutcomeRecord],
    rules: &RuleSet,
    catalogue: &TacticsCatalogue,
    state: SystemState<'_>,
    settings: &AwarenessSettings,
    decided_by: Mode,
) -> Selection {
    if violations.is_empty() {
        return Selection::NoViolation;
    }
    let step = queue_step(sample, settings.queue_step_factor);
    let attrs = attributes_by_weight(violations);
    for &attr in &attrs {
        let cands = engine.candidates(attr, rules, catalogue, state, false);
        if let Some(i) = time_act(&cands, history, attr, sample.arrivals, settings.context_tolerance) {
            return Selection::Decision(AdaptationEngine::decide(
                &cands[i],
                attr,
                &attrs,
                catalogue,
                step,
                sample.time_instance,
                decided_by,
                false,
            ));
        }
    }
    Selection::NoFeasible(attrs)
}

/// Weighted goal satisfaction in `[0, 1]` over goals with data.
pub fn weighted_satisfaction(goals: &GoalsModel, obs: &Observations) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for g in &goals.goals {
        if let Some(x) = obs.get(g.attribute) {
            num += g.weight * g.satisfaction(x);
            den += g.weight;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Benefit and cost of one decision path over its latest evaluation window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathStats {
    pub satisfaction: f64,
    /// Controller invocations per tick.
    pub work: f64,
}

/// Scores paths as satisfaction minus `penalty` times work normalised by the
/// busiest path; keeps `current` unless another path scores strictly higher.
pub fn meta_act(stats: &BTreeMap<DecisionPath, PathStats>, current: DecisionPath, penalty: f64) -> DecisionPath {
    let max_work = stats.values().map(|s| s.work).fold(0.0, f64::max);
    let score = |s: &PathStats| {
        let w = if max_work > 0.0 { s.work / max_work } else { 0.0 };
        s.satisfaction - penalty * w
    };
    let mut best = current;
    let mut best_score = stats.get(&current).map_or(f64::NEG_INFINITY, score);
    for path in DecisionPath::ALL {
        let Some(s) = stats.get(&path) else { continue };
        let v = score(s);
        let eps = 1e-12 * v.abs().max(best_score.abs()).max(1.0);
        if v > best_score + eps {
            best = path;
            best_score = v;
        }
    }
    best
}

/// Chooses which decision path drives adaptation. Every path is tried for
/// one period, in order, before scores are compared.
#[derive(Debug, Clone)]
pub struct MetaController {
    period: u32,
    penalty: f64,
    active: DecisionPath,
    ticks: u64,
    window_satisfaction: RunningMean,
    window_work: RunningMean,
    stats: BTreeMap<DecisionPath, PathStats>,
}

impl MetaController {
    pub fn new(period: u32, penalty: f64) -> Self {
        MetaController {
            period: period.max(1),
            penalty,
            active: DecisionPath::Stimulus,
            ticks: 0,
            window_satisfaction: RunningMean::default(),
            window_work: RunningMean::default(),
            stats: BTreeMap::new(),
        }
    }

    pub fn active(&self) -> DecisionPath {
        self.active
    }

    pub fn stats(&self) -> &BTreeMap<DecisionPath, PathStats> {
        &self.stats
    }

    /// Feeds one tick. Every `period` ticks the active path's window is
    /// stored and the path is re-chosen; returns the new path on a switch.
    pub fn on_tick(&mut self, satisfaction: Option<f64>, work: u64) -> Option<DecisionPath> {
        self.ticks += 1;
        if let Some(s) = satisfaction {
            self.window_satisfaction.push(s);
        }
        self.window_work.push(work as f64);
        if !self.ticks.is_multiple_of(self.period as u64) {
            return None;
        }
        let stats = PathStats {
            satisfaction: std::mem::take(&mut self.window_satisfaction).mean().unwrap_or(0.0),
            work: std::mem::take(&mut self.window_work).mean().unwrap_or(0.0),
        };
        self.stats.insert(self.active, stats);
        let next = match DecisionPath::ALL.into_iter().find(|p| !self.stats.contains_key(p)) {
            Some(unexplored) => unexplored,
            None => meta_act(&self.stats, self.active, self.penalty),
        };
        if next == self.active {
            return None;
        }
        self.active = next;
        Some(next)
    }
}

#[derive(Debug, Clone)]
struct PendingEvaluation {
    tactic_id: String,
    attribute: QualityAttribute,
    objective: Objective,
    goal_id: u32,
    value_before: f64,
    context_load: u64,
}

/// Compares the triggering attribute one tick after an executed decision.
#[derive(Debug, Clone, Default)]
pub struct ArchitectureEvaluator {
    pending: Option<PendingEvaluation>,
    history: Vec<TacticOutcomeRecord>,
}

impl ArchitectureEvaluator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn history(&self) -> &[TacticOutcomeRecord] {
        &self.history
    }

    /// Registers an executed decision taken on `sample`.
    pub fn arm(&mut self, decision: &AdaptationDecision, sample: &MonitorSample, goals: &GoalsModel) {
        let attribute = decision.primary_trigger();
        let Some(goal) = goals.goal_for(attribute) else {
            self.pending = None;
            return;
        };
        let Some(before) = sample.observations().get(attribute) else {
            self.pending = None;
            return;
        };
        self.pending = Some(PendingEvaluation {
            tactic_id: decision.tactic_id.clone(),
            attribute,
            objective: goal.objective,
            goal_id: goal.goal_id,
            value_before: before,
            context_load: sample.arrivals,
        });
    }

    /// Closes the pending evaluation against the next sample; mirrors the
    /// record into the goals history.
    pub fn evaluate_after(&mut self, sample: &MonitorSample, goals: &mut GoalsModel) -> Option<TacticOutcomeRecord> {
        let p = self.pending.take()?;
        if sample.is_empty() {
            return None;
        }
        let after = sample.observations().get(p.attribute)?;
        let record = TacticOutcomeRecord {
            tactic_id: p.tactic_id,
            attribute: p.attribute,
            objective: p.objective,
            value_before: p.value_before,
            value_after: after,
            time_instance: sample.time_instance,
            context_load: p.context_load,
        };
        // Ticks are monotone, so the history stays ordered.
        let _ = goals.record_goal_history(GoalHistoryRecord {
            time_instance: record.time_instance,
            goal_id: p.goal_id,
            average_violation_value: record.value_before,
            tactic_executed: record.tactic_id.clone(),
            average_value_after_adaptation: record.value_after,
        });
        self.history.push(record.clone());
        Some(record)
    }
}

/// Interaction awareness across federated nodes is not modelled.
pub fn interaction_act() -> Option<AdaptationDecision> {
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::detect;
    use crate::broker::SchedulingPolicy;
    use crate::cloud::{Datacenter, HostSpec, VmType};

    fn dc() -> Datacenter {
        let spec = HostSpec {
            cores: 12,
            mips_per_core: 3067.0,
            ram_gb: 256.0,
            idle_power: 200.0,
            max_power: 400.0,
        };
        let xl = VmType {
            name: "m4.xlarge".into(),
            vcpus: 4,
            mips_per_vcpu: 2400.0,
            ram_gb: 16.0,
            cost_rate: 0.2,
        };
        let mut d = Datacenter::new(spec, 10, vec![xl.clone()]).unwrap();
        d.provision_vm(&xl).unwrap();
        d.provision_vm(&xl).unwrap();
        d
    }

    fn sample(rt: f64, queue: usize) -> MonitorSample {
        MonitorSample {
            time_instance: 864.0,
            window_start: 0.0,
            avg_response_time: Some(rt),
            throughput: 10,
            energy_kwh_interval: 0.1,
            cost_interval: 0.1,
            per_service: Default::default(),
            arrivals: 100,
            peak_queue_depth: queue,
            total_vcpus: 8,
            projection: 1.0,
        }
    }

    fn record(tactic: &str, before: f64, after: f64, load: u64) -> TacticOutcomeRecord {
        TacticOutcomeRecord {
            tactic_id: tactic.into(),
            attribute: QualityAttribute::ResponseTime,
            objective: Objective::Minimise,
            value_before: before,
            value_after: after,
            time_instance: 0.0,
            context_load: load,
        }
    }

    #[test]
    fn stimulus_prerequisite() {
        let s = AwarenessSettings::default();
        let levels = [AwarenessLevel::Interaction].into();
        assert_eq!(
            AwarenessConfig::new(Mode::StimulusAware, levels, s.clone()),
            Err(AwarenessError::MissingStimulus(AwarenessLevel::Interaction))
        );
        for m in Mode::ALL {
            let c = AwarenessConfig::for_mode(m, s.clone()).unwrap();
            assert_eq!(c.has(AwarenessLevel::Stimulus), m.is_self_aware());
        }
        assert!(AwarenessConfig::new(Mode::GoalAware, [AwarenessLevel::Stimulus].into(), s).is_err());
    }

    #[test]
    fn queue_sizing() {
        assert_eq!(queue_step(&sample(30.0, 24), 2.0), 2);
        assert_eq!(queue_step(&sample(30.0, 16), 2.0), 1);
        assert_eq!(queue_step(&sample(30.0, 0), 2.0), 1);
    }

    #[test]
    fn stimulus_and_goal_acts() {
        let d = dc();
        let cat = TacticsCatalogue::reference();
        let rules = RuleSet::reference(&cat);
        let mut goals = GoalsModel::reference_preset();
        let engine = AdaptationEngine::new();
        let settings = AwarenessSettings::default();
        let state = SystemState {
            dc: &d,
            policy: SchedulingPolicy::Fifo,
        };

        let s = sample(40.0, 24);
        let v = detect(&s, &mut goals);
        let Selection::Decision(dec) = stimulus_act(&engine, &v, &s, &rules, &cat, state, &settings, Mode::StimulusAware)
        else {
            panic!()
        };
        assert_eq!(dec.tactic_id, "dynamic-scheduling");

        // 23 > 0.9 * 25: proactive, scaling tactics only.
        let s = sample(23.0, 0);
        let v = detect(&s, &mut goals);
        assert!(v.is_empty());
        let Selection::Decision(dec) = goal_act(&engine, &v, &s, &goals, &rules, &cat, state, &settings, Mode::GoalAware)
        else {
            panic!()
        };
        assert!(dec.proactive);
        assert_eq!(dec.tactic_id, "vertical-scaling");

        let s = sample(20.0, 0);
        let v = detect(&s, &mut goals);
        assert_eq!(
            goal_act(&engine, &v, &s, &goals, &rules, &cat, state, &settings, Mode::GoalAware),
            Selection::NoViolation
        );

        let s = sample(30.0, 0);
        let v = detect(&s, &mut goals);
        let Selection::Decision(dec) = goal_act(&engine, &v, &s, &goals, &rules, &cat, state, &settings, Mode::GoalAware)
        else {
            panic!()
        };
        assert!(!dec.proactive);
    }

    #[test]
    fn time_act_ranking() {
        let c = |id: &str, p| Candidate {
            tactic_id: id.into(),
            priority: p,
            max_step: 1,
        };
        let cands = [c("a", 1), c("b", 2)];
        let rt = QualityAttribute::ResponseTime;
        assert_eq!(time_act(&cands, &[], rt, 100, 0.25), Some(0));
        let hist = [record("a", 10.0, 9.0, 100), record("b", 10.0, 6.0, 100)];
        assert_eq!(time_act(&cands, &hist, rt, 100, 0.25), Some(1));
        // Out-of-context records are ignored.
        assert_eq!(time_act(&cands, &hist, rt, 200, 0.25), Some(0));
        let tie = [record("a", 10.0, 8.0, 100), record("b", 10.0, 8.0, 100)];
        assert_eq!(time_act(&cands, &tie, rt, 100, 0.25), Some(0));
        assert_eq!(time_act(&[], &tie, rt, 100, 0.25), None);
    }

    #[test]
    fn improvement_sign() {
        let r = record("a", 62.85, 20.53, 0);
        assert!((r.relative_improvement() - (62.85 - 20.53) / 62.85).abs() < 1e-12);
        assert!(record("a", 10.0, 12.0, 0).relative_improvement() < 0.0);
    }

    #[test]
    fn meta_scoring() {
        let mut stats = BTreeMap::new();
        stats.insert(
            DecisionPath::Stimulus,
            PathStats {
                satisfaction: 0.6,
                work: 1.0,
            },
        );
        stats.insert(
            DecisionPath::Goal,
            PathStats {
                satisfaction: 0.8,
                work: 1.0,
            },
        );
        assert_eq!(meta_act(&stats, DecisionPath::Stimulus, 0.1), DecisionPath::Goal);
        stats.get_mut(&DecisionPath::Goal).unwrap().satisfaction = 0.6;
        assert_eq!(meta_act(&stats, DecisionPath::Stimulus, 0.1), DecisionPath::Stimulus);
        assert_eq!(meta_act(&stats, DecisionPath::Goal, 0.1), DecisionPath::Goal);
    }

    #[test]
    fn meta_schedule_explores_then_exploits() {
        let mut m = MetaController::new(5, 0.1);
        let mut switches = Vec::new();
        for tick in 1..=20u64 {
            let sat = match m.active() {
                DecisionPath::Stimulus => 0.5,
                DecisionPath::Goal => 0.9,
                DecisionPath::Time => 0.7,
            };
            if let Some(p) = m.on_tick(Some(sat), 3) {
                switches.push((tick, p));
            }
        }
        assert_eq!(
            switches,
            [(5, DecisionPath::Goal), (10, DecisionPath::Time), (15, DecisionPath::Goal)]
        );
    }

    #[test]
    fn evaluator_records_one_tick_later() {
        let mut goals = GoalsModel::reference_preset();
        let mut ev = ArchitectureEvaluator::new();
        let empty = sample(1.0, 0);
        assert!(ev.evaluate_after(&empty, &mut goals).is_none());
        let dec = AdaptationDecision {
            tactic_id: "vertical-scaling".into(),
            magnitude: 1,
            trigger: vec![QualityAttribute::ResponseTime],
            decided_at: 864.0,
            decided_by: Mode::StimulusAware,
            proactive: false,
        };
        ev.arm(&dec, &sample(62.85, 0), &goals);
        let mut next = sample(20.53, 0);
        next.time_instance = 1728.0;
        let r = ev.evaluate_after(&next, &mut goals).unwrap();
        assert!((r.relative_improvement() - 0.673).abs() < 1e-3);
        assert_eq!(goals.history().len(), 1);
        assert_eq!(goals.history()[0].tactic_executed, "vertical-scaling");
        assert!(ev.evaluate_after(&next, &mut goals).is_none());
    }

    #[test]
    fn interaction_stub() {
        assert!(interaction_act().is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn meta_choice_invariant_under_weight_scaling(
                rt in 1.0f64..80.0,
                e in 0.1f64..2.0,
                k in 0.01f64..10.0,
            ) {
                let goals = GoalsModel::reference_preset();
                let mut scaled = goals.clone();
                for g in scaled.goals.iter_mut() {
                    g.weight *= k;
                }
                let obs = Observations { response_time: Some(rt), energy_kwh: e, cost_usd: e, throughput: 1.0, projection: 30.0 };
                let a = weighted_satisfaction(&goals, &obs).unwrap();
                let b = weighted_satisfaction(&scaled, &obs).unwrap();
                let mut s1 = BTreeMap::new();
                s1.insert(DecisionPath::Stimulus, PathStats { satisfaction: a, work: 1.0 });
                s1.insert(DecisionPath::Goal, PathStats { satisfaction: 0.7, work: 2.0 });
                let mut s2 = s1.clone();
                s2.get_mut(&DecisionPath::Stimulus).unwrap().satisfaction = b;
                prop_assert_eq!(
                    meta_act(&s1, DecisionPath::Stimulus, 0.1),
                    meta_act(&s2, DecisionPath::Stimulus, 0.1)
                );
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
