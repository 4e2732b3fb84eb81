//! QoS goals, violation checks, proactive prediction and goal history.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GoalError {
    #[error("goal {goal}: {reason}")]
    Invalid { goal: String, reason: String },
    #[error("goal id {0} is used more than once")]
    DuplicateId(u32),
    #[error("goal weights sum to {0}, which exceeds 1")]
    WeightSum(f64),
    #[error("goals model is empty")]
    Empty,
    #[error("history record at t={got} precedes the last record at t={last}")]
    OutOfOrder { got: f64, last: f64 },
}

/// The measurable quality a goal constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityAttribute {
    ResponseTime,
    Energy,
    Cost,
    Throughput,
}

impl QualityAttribute {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityAttribute::ResponseTime => "response_time",
            QualityAttribute::Energy => "energy",
            QualityAttribute::Cost => "cost",
            QualityAttribute::Throughput => "throughput",
        }
    }
}

impl fmt::Display for QualityAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityAttribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "response_time" => Ok(QualityAttribute::ResponseTime),
            "energy" => Ok(QualityAttribute::Energy),
            "cost" => Ok(QualityAttribute::Cost),
            "throughput" => Ok(QualityAttribute::Throughput),
            other => Err(format!("unknown quality attribute {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Minimise,
    Maximise,
}

/// A goal. Goals carrying a `violation_threshold` act as runtime goals and
/// can trigger proactive adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosGoal {
    #[serde(rename = "id")]
    pub goal_id: u32,
    pub name: String,
    pub attribute: QualityAttribute,
    #[serde(rename = "constraint")]
    pub constraint_value: f64,
    pub metric: String,
    pub objective: Objective,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_threshold: Option<f64>,
    #[serde(skip)]
    pub violated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationStatus {
    pub goal_id: u32,
    pub violated: bool,
    pub observed: f64,
}

/// Violation verdict; equality with the constraint is satisfied.
pub fn violates(objective: Objective, constraint: f64, observed: f64) -> bool {
    match objective {
        Objective::Minimise => observed > constraint,
        Objective::Maximise => observed < constraint,
    }
}

impl QosGoal {
    pub fn check(&mut self, observed: f64) -> ViolationStatus {
        self.violated = violates(self.objective, self.constraint_value, observed);
        ViolationStatus {
            goal_id: self.goal_id,
            violated: self.violated,
            observed,
        }
    }

    /// True when `observed` has crossed the proactive trip line but not the
    /// constraint itself. For minimise goals the trip line is
    /// `threshold * constraint`; for maximise goals it is `constraint / threshold`.
    pub fn predict_violation(&self, observed: f64) -> bool {
        let Some(t) = self.violation_threshold else {
            return false;
        };
        if violates(self.objective, self.constraint_value, observed) {
            return false;
        }
        match self.objective {
            Objective::Minimise => observed > t * self.constraint_value,
            Objective::Maximise => observed < self.constraint_value / t,
        }
    }

    /// Degree of satisfaction in `[0, 1]`: 1 when met, otherwise the ratio of
    /// constraint to observation (inverted for maximise goals).
    pub fn satisfaction(&self, observed: f64) -> f64 {
        if !violates(self.objective, self.constraint_value, observed) {
            return 1.0;
        }
        let s = match self.objective {
            Objective::Minimise => self.constraint_value / observed,
            Objective::Maximise => observed / self.constraint_value,
        };
        if s.is_finite() {
            s.clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<(), GoalError> {
        let invalid = |reason: &str| GoalError::Invalid {
            goal: format!("{} ({})", self.goal_id, self.name),
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(invalid("name is empty"));
        }
        if !self.constraint_value.is_finite() {
            return Err(invalid("constraint must be a finite number"));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(invalid("weight must lie in [0, 1]"));
        }
        if let Some(t) = self.violation_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(invalid("violation_threshold must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalHistoryRecord {
    pub time_instance: f64,
    pub goal_id: u32,
    pub average_violation_value: f64,
    pub tactic_executed: String,
    pub average_value_after_adaptation: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoalsModel {
    pub goals: Vec<QosGoal>,
    history: Vec<GoalHistoryRecord>,
}

impl GoalsModel {
    /// Validates and loads goals.
    pub fn load_goals(goals: Vec<QosGoal>) -> Result<Self, GoalError> {
        if goals.is_empty() {
            return Err(GoalError::Empty);
        }
        let mut ids = BTreeSet::new();
        for g in &goals {
            g.validate()?;
            if !ids.insert(g.goal_id) {
                return Err(GoalError::DuplicateId(g.goal_id));
            }
        }
        let sum: f64 = goals.iter().map(|g| g.weight).sum();
        if sum > 1.0 + 1e-9 {
            return Err(GoalError::WeightSum(sum));
        }
        Ok(GoalsModel {
            goals,
            history: Vec::new(),
        })
    }

    /// Response time 25, energy 25 kWh and cost 50 $, weighted 0.5 / 0.2 / 0.2.
    pub fn reference_preset() -> Self {
        let goal = |id, name: &str, attribute, constraint, metric: &str, weight| QosGoal {
            goal_id: id,
            name: name.into(),
            attribute,
            constraint_value: constraint,
            metric: metric.into(),
            objective: Objective::Minimise,
            weight,
            user_id: None,
            violation_threshold: Some(0.9),
            violated: false,
        };
        GoalsModel::load_goals(vec![
            goal(1, "Response time", QualityAttribute::ResponseTime, 25.0, "ms", 0.5),
            goal(2, "Greenability", QualityAttribute::Energy, 25.0, "kWh", 0.2),
            goal(3, "Operational cost", QualityAttribute::Cost, 50.0, "$", 0.2),
        ])
        .expect("preset goals are valid")
    }

    pub fn goal(&self, goal_id: u32) -> Option<&QosGoal> {
        self.goals.iter().find(|g| g.goal_id == goal_id)
    }

    pub fn goal_for(&self, attribute: QualityAttribute) -> Option<&QosGoal> {
        self.goals.iter().find(|g| g.attribute == attribute)
    }

    pub fn weight_of(&self, attribute: QualityAttribute) -> f64 {
        self.goals
            .iter()
            .filter(|g| g.attribute == attribute)
            .map(|g| g.weight)
            .sum()
    }

    pub fn history(&self) -> &[GoalHistoryRecord] {
        &self.history
    }

    pub fn record_goal_history(&mut self, record: GoalHistoryRecord) -> Result<(), GoalError> {
        if let Some(last) = self.history.last() {
            if record.time_instance < last.time_instance {
                return Err(GoalError::OutOfOrder {
                    got: record.time_instance,
                    last: last.time_instance,
                });
            }
        }
        self.history.push(record);
        Ok(())
    }

    pub fn history_for_tactic<'a>(&'a self, tactic: &'a str) -> impl Iterator<Item = &'a GoalHistoryRecord> + 'a {
        self.history.iter().filter(move |r| r.tactic_executed == tactic)
    }

    /// Records with `from <= time_instance < to`.
    pub fn history_between(&self, from: f64, to: f64) -> impl Iterator<Item = &GoalHistoryRecord> {
        self.history
            .iter()
            .filter(move |r| r.time_instance >= from && r.time_instance < to)
    }
}
