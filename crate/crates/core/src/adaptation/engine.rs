//! Violation detection and rule-based tactic selection.

use std::collections::{BTreeMap, BTreeSet};

use crate::goals::{GoalsModel, QualityAttribute};
use crate::mode::Mode;

use super::executor::{max_feasible_step, SystemState};
use super::monitor::MonitorSample;
use super::tactics::{RuleSet, TacticKind, TacticsCatalogue};
use super::AdaptationDecision;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub goal_id: u32,
    pub attribute: QualityAttribute,
    pub observed: f64,
    pub constraint: f64,
    pub weight: f64,
}

/// Checks every goal against the sample. An empty window is not checked.
pub fn detect(sample: &MonitorSample, goals: &mut GoalsModel) -> Vec<Violation> {
    if sample.is_empty() {
        return Vec::new();
    }
    let obs = sample.observations();
    let mut out = Vec::new();
    for g in goals.goals.iter_mut() {
        let Some(x) = obs.get(g.attribute) else { continue };
        if g.check(x).violated {
            out.push(Violation {
                goal_id: g.goal_id,
                attribute: g.attribute,
                observed: x,
                constraint: g.constraint_value,
                weight: g.weight,
            });
        }
    }
    out
}

/// Goals past their proactive trip line but not yet violated.
pub fn predict(sample: &MonitorSample, goals: &GoalsModel) -> Vec<Violation> {
    if sample.is_empty() {
        return Vec::new();
    }
    let obs = sample.observations();
    goals
        .goals
        .iter()
        .filter_map(|g| {
            let x = obs.get(g.attribute)?;
            g.predict_violation(x).then_some(Violation {
                goal_id: g.goal_id,
                attribute: g.attribute,
                observed: x,
                constraint: g.constraint_value,
                weight: g.weight,
            })
        })
        .collect()
}

/// Distinct attributes by descending weight; declaration order breaks ties.
pub fn attributes_by_weight(violations: &[Violation]) -> Vec<QualityAttribute> {
    let mut attrs: Vec<(QualityAttribute, f64)> = Vec::new();
    for v in violations {
        match attrs.iter_mut().find(|(a, _)| *a == v.attribute) {
            Some(entry) => entry.1 += v.weight,
            None => attrs.push((v.attribute, v.weight)),
        }
    }
    attrs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    attrs.into_iter().map(|(a, _)| a).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tactic_id: String,
    pub priority: u32,
    /// Largest step the state permits.
    pub max_step: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    NoViolation,
    Decision(AdaptationDecision),
    /// Every candidate for every violated attribute is at its limits.
    NoFeasible(Vec<QualityAttribute>),
}

/// Rule-based selection with ineffective-tactic escalation.
#[derive(Debug, Clone, Default)]
pub struct AdaptationEngine {
    ineffective: BTreeMap<QualityAttribute, BTreeSet<String>>,
    last: Option<(String, QualityAttribute)>,
}

impl AdaptationEngine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Updates ineffective flags from this tick's violations. The tactic run
    /// on the previous tick is flagged if its attribute is still violated;
    /// satisfied attributes lose their flags.
    pub fn observe(&mut self, violations: &[Violation]) {
        let violated: BTreeSet<QualityAttribute> = violations.iter().map(|v| v.attribute).collect();
        if let Some((tactic, attr)) = self.last.take() {
            if violated.contains(&attr) {
                self.ineffective.entry(attr).or_default().insert(tactic);
            }
        }
        self.ineffective.retain(|a, _| violated.contains(a));
    }

    pub fn is_flagged(&self, attribute: QualityAttribute, tactic_id: &str) -> bool {
        self.ineffective.get(&attribute).is_some_and(|s| s.contains(tactic_id))
    }

    pub fn note_executed(&mut self, tactic_id: &str, attribute: QualityAttribute) {
        self.last = Some((tactic_id.to_string(), attribute));
    }

    /// Feasible, unflagged tactics for `attribute` in rule priority. When
    /// every feasible tactic is flagged, the feasible scaling tactics are
    /// returned instead (scheduler changes are not repeated).
    pub fn candidates(
        &self,
        attribute: QualityAttribute,
        rules: &RuleSet,
        catalogue: &TacticsCatalogue,
        state: SystemState<'_>,
        scaling_only: bool,
    ) -> Vec<Candidate> {
        let mut feasible = Vec::new();
        for rule in rules.for_attribute(attribute) {
            let Some(tactic) = catalogue.get(&rule.tactic_id) else { continue };
            if scaling_only && !tactic.is_scaling() {
                continue;
            }
            let max_step = max_feasible_step(tactic, catalogue, state);
            if max_step == 0 {
                continue;
            }
            feasible.push((
                Candidate {
                    tactic_id: tactic.tactic_id.clone(),
                    priority: rule.priority,
                    max_step,
                },
                tactic.is_scaling(),
            ));
        }
        let fresh: Vec<Candidate> = feasible
            .iter()
            .filter(|(c, _)| !self.is_flagged(attribute, &c.tactic_id))
            .map(|(c, _)| c.clone())
            .collect();
        if !fresh.is_empty() {
            return fresh;
        }
        feasible.into_iter().filter(|(_, scaling)| *scaling).map(|(c, _)| c).collect()
    }

    /// Builds the decision for `candidate`, clamping `step` to what the
    /// tactic and state allow.
    #[allow(clippy::too_many_arguments)]
    pub fn decide(
        candidate: &Candidate,
        attribute: QualityAttribute,
        violated: &[QualityAttribute],
        catalogue: &TacticsCatalogue,
        step: u32,
        now: f64,
        decided_by: Mode,
        proactive: bool,
    ) -> AdaptationDecision {
        let tactic = catalogue.get(&candidate.tactic_id).expect("candidate comes from catalogue");
        let magnitude = match tactic.kind {
            TacticKind::Concurrency | TacticKind::DynamicScheduling | TacticKind::Consolidation => 1,
            _ => {
                let largest = tactic.variations.iter().copied().max().unwrap_or(1);
                step.max(1).min(largest).min(candidate.max_step)
            }
        };
        let mut trigger = vec![attribute];
        trigger.extend(violated.iter().copied().filter(|a| *a != attribute));
        AdaptationDecision {
            tactic_id: candidate.tactic_id.clone(),
            magnitude,
            trigger,
            decided_at: now,
            decided_by,
            proactive,
        }
    }

    /// Picks the first candidate for the highest-weight violated attribute,
    /// moving to the next attribute only when one has nothing feasible.
    #[allow(clippy::too_many_arguments)]
    pub fn select_tactic(
        &self,
        violations: &[Violation],
        rules: &RuleSet,
        catalogue: &TacticsCatalogue,
        state: SystemState<'_>,
        step: u32,
        now: f64,
        decided_by: Mode,
    ) -> Selection {
        if violations.is_empty() {
            return Selection::NoViolation;
        }
        let attrs = attributes_by_weight(violations);
        for &attr in &attrs {
            let cands = self.candidates(attr, rules, catalogue, state, false);
            if let Some(c) = cands.first() {
                return Selection::Decision(Self::decide(c, attr, &attrs, catalogue, step, now, decided_by, false));
            }
        }
        Selection::NoFeasible(attrs)
    }
}
