//! Per-tick controller combining the reactive engine with the awareness levels.

use std::time::Instant;

use crate::adaptation::{
    detect, AdaptationDecision, AdaptationEngine, ExecutionReport, MonitorSample, RuleSet, Selection, SystemState,
    TacticsCatalogue, Violation,
};
use crate::awareness::{
    goal_act, stimulus_act, time_select, weighted_satisfaction, ArchitectureEvaluator, AwarenessConfig,
    AwarenessLevel, DecisionPath, MetaController, TacticOutcomeRecord,
};
use crate::goals::GoalsModel;
use crate::metrics::{OverheadLedger, Phase};
use crate::mode::Mode;

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub violations: Vec<Violation>,
    pub decision: Option<AdaptationDecision>,
    /// Violations existed but no tactic was feasible.
    pub no_feasible: bool,
    pub evaluation: Option<TacticOutcomeRecord>,
    /// Decision path used this tick (self-aware modes).
    pub path: Option<DecisionPath>,
    pub switched_to: Option<DecisionPath>,
}

/// The adaptive part of a run. Non-adaptive runs have no controller.
#[derive(Debug, Clone)]
pub struct Controller {
    config: AwarenessConfig,
    engine: AdaptationEngine,
    evaluator: ArchitectureEvaluator,
    meta: Option<MetaController>,
    last_invocations: u64,
}

impl Controller {
    /// Panics if `config.mode` is non-adaptive.
    pub fn new(config: AwarenessConfig) -> Self {
        assert!(config.mode.is_adaptive(), "non-adaptive runs have no controller");
        let meta = config
            .has(AwarenessLevel::Meta)
            .then(|| MetaController::new(config.settings.meta_period, config.settings.meta_overhead_penalty));
        Controller {
            config,
            engine: AdaptationEngine::new(),
            evaluator: ArchitectureEvaluator::new(),
            meta,
            last_invocations: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn outcome_history(&self) -> &[TacticOutcomeRecord] {
        self.evaluator.history()
    }

    pub fn active_path(&self) -> Option<DecisionPath> {
        if let Some(m) = &self.meta {
            return Some(m.active());
        }
        match self.config.mode {
            Mode::StimulusAware => Some(DecisionPath::Stimulus),
            Mode::GoalAware => Some(DecisionPath::Goal),
            Mode::TimeAware => Some(DecisionPath::Time),
            _ => None,
        }
    }

    /// Evaluates, detects and decides on one sample. Phase times go to `ledger`.
    pub fn tick(
        &mut self,
        sample: &MonitorSample,
        goals: &mut GoalsModel,
        rules: &RuleSet,
        catalogue: &TacticsCatalogue,
        state: SystemState<'_>,
        ledger: &mut OverheadLedger,
    ) -> TickOutcome {
        let self_aware = self.config.mode.is_self_aware();
        let work = ledger.total_invocations() - self.last_invocations;

        let mut evaluation = None;
        if self_aware {
            let t = Instant::now();
            evaluation = self.evaluator.evaluate_after(sample, goals);
            ledger.add(Phase::Monitoring, t.elapsed());
        }

        let t = Instant::now();
        let violations = detect(sample, goals);
        self.engine.observe(&violations);
        ledger.add(Phase::Detecting, t.elapsed());

        let t = Instant::now();
        let mut switched_to = None;
        if let Some(meta) = self.meta.as_mut() {
            let satisfaction = if sample.is_empty() {
                None
            } else {
                weighted_satisfaction(goals, &sample.observations())
            };
            switched_to = meta.on_tick(satisfaction, work);
        }
        let path = self.active_path();
        let mode = self.config.mode;
        let settings = &self.config.settings;
        let selection = match path {
            None => self
                .engine
                .select_tactic(&violations, rules, catalogue, state, 1, sample.time_instance, mode),
            Some(DecisionPath::Stimulus) => {
                stimulus_act(&self.engine, &violations, sample, rules, catalogue, state, settings, mode)
            }
            Some(DecisionPath::Goal) => {
                goal_act(&self.engine, &violations, sample, goals, rules, catalogue, state, settings, mode)
            }
            Some(DecisionPath::Time) => time_select(
                &self.engine,
                &violations,
                sample,
                self.evaluator.history(),
                rules,
                catalogue,
                state,
                settings,
                mode,
            ),
        };
        ledger.add(Phase::Deciding, t.elapsed());
        self.last_invocations = ledger.total_invocations();

        let (decision, no_feasible) = match selection {
            Selection::Decision(d) => (Some(d), false),
            Selection::NoFeasible(attrs) => {
                log::debug!("t={} no feasible tactic for {:?}", sample.time_instance, attrs);
                (None, true)
            }
            Selection::NoViolation => (None, false),
        };
        TickOutcome {
            violations,
            decision,
            no_feasible,
            evaluation,
            path,
            switched_to,
        }
    }

    /// Tells the controller what happened to its decision.
    pub fn on_executed(
        &mut self,
        decision: &AdaptationDecision,
        report: &ExecutionReport,
        sample: &MonitorSample,
        goals: &GoalsModel,
    ) {
        if !report.applied() {
            return;
        }
        self.engine.note_executed(&decision.tactic_id, decision.primary_trigger());
        if self.config.mode.is_self_aware() {
            self.evaluator.arm(decision, sample, goals);
        }
    }
}
