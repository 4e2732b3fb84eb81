//! Reactive control loop: monitor, detector, rule-based engine and executor.

pub mod engine;
pub mod executor;
pub mod monitor;
pub mod tactics;

use serde::{Deserialize, Serialize};

use crate::goals::QualityAttribute;
use crate::mode::Mode;

pub use engine::{detect, predict, AdaptationEngine, Candidate, Selection, Violation};
pub use executor::{execute, max_feasible_step, ExecutionError, ExecutionOutcome, ExecutionReport, SystemState};
pub use monitor::{Monitor, MonitorSample, Readings};
pub use tactics::{
    AdaptationRule, AdaptationTactic, AffectedObject, Change, RuleSet, TacticKind, TacticsCatalogue, TacticsError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationDecision {
    pub tactic_id: String,
    /// Step chosen (VMs or hosts); 1 for reconfiguration tactics.
    pub magnitude: u32,
    /// The attribute the decision serves first, then any other violated ones.
    pub trigger: Vec<QualityAttribute>,
    pub decided_at: f64,
    pub decided_by: Mode,
    /// Issued on a predicted rather than an actual violation.
    pub proactive: bool,
}

impl AdaptationDecision {
    pub fn primary_trigger(&self) -> QualityAttribute {
        self.trigger[0]
    }
}
