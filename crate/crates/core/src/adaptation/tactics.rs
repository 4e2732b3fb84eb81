//! Tactics catalogue and adaptation rules.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broker::SchedulingPolicy;
use crate::goals::QualityAttribute;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TacticsError {
    #[error("tactic id {0:?} is defined more than once")]
    DuplicateTactic(String),
    #[error("tactic {tactic}: {reason}")]
    InvalidTactic { tactic: String, reason: String },
    #[error("rule {rule} references unknown tactic {tactic:?}")]
    UnknownTactic { rule: u32, tactic: String },
    #[error("rule id {0} is used more than once")]
    DuplicateRule(u32),
    #[error("rules {first} and {second} share priority {priority} for {attribute}")]
    DuplicatePriority {
        attribute: QualityAttribute,
        priority: u32,
        first: u32,
        second: u32,
    },
    #[error("rule {0}: priority must be >= 1")]
    ZeroPriority(u32),
}

/// What a tactic does when executed. Each kind has one executor routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TacticKind {
    VerticalScaling,
    VerticalDescaling,
    HorizontalScaling,
    HorizontalDescaling,
    Consolidation,
    Concurrency,
    DynamicScheduling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectedObject {
    Host,
    Vm,
    Scheduler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Change {
    Increase,
    Decrease,
    Reconfigure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationTactic {
    #[serde(rename = "id")]
    pub tactic_id: String,
    pub kind: TacticKind,
    #[serde(default)]
    pub description: String,
    pub affected_object: AffectedObject,
    pub change: Change,
    /// Lower bound on the affected count (hosts or VMs).
    #[serde(default)]
    pub min_limit: u32,
    /// Upper bound on the affected count; absent means datacenter capacity.
    #[serde(default)]
    pub max_limit: Option<u32>,
    #[serde(default = "default_variations")]
    pub variations: Vec<u32>,
}

fn default_variations() -> Vec<u32> {
    vec![1, 2, 3]
}

impl AdaptationTactic {
    /// Scaling tactics change the host or VM population; scheduler tactics do not.
    pub fn is_scaling(&self) -> bool {
        self.affected_object != AffectedObject::Scheduler
    }

    pub fn validate(&self) -> Result<(), TacticsError> {
        let bad = |reason: &str| TacticsError::InvalidTactic {
            tactic: self.tactic_id.clone(),
            reason: reason.into(),
        };
        if self.tactic_id.is_empty() {
            return Err(bad("id must not be empty"));
        }
        if let Some(max) = self.max_limit {
            if max < self.min_limit {
                return Err(bad("max_limit is below min_limit"));
            }
        }
        if self.variations.is_empty() || self.variations.contains(&0) {
            return Err(bad("variations must be non-empty positive steps"));
        }
        let expected = match self.kind {
            TacticKind::VerticalScaling | TacticKind::VerticalDescaling => AffectedObject::Vm,
            TacticKind::HorizontalScaling | TacticKind::HorizontalDescaling | TacticKind::Consolidation => {
                AffectedObject::Host
            }
            TacticKind::Concurrency | TacticKind::DynamicScheduling => AffectedObject::Scheduler,
        };
        if self.affected_object != expected {
            return Err(bad("affected_object does not match the tactic kind"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticsCatalogue {
    pub tactics: Vec<AdaptationTactic>,
    /// VM type provisioned by scaling tactics.
    pub scale_vm_type: String,
    /// Policies dynamic scheduling rotates through.
    pub scheduling_variations: Vec<SchedulingPolicy>,
}

impl TacticsCatalogue {
    pub fn new(
        tactics: Vec<AdaptationTactic>,
        scale_vm_type: String,
        scheduling_variations: Vec<SchedulingPolicy>,
    ) -> Result<Self, TacticsError> {
        let mut ids = BTreeSet::new();
        for t in &tactics {
            t.validate()?;
            if !ids.insert(t.tactic_id.clone()) {
                return Err(TacticsError::DuplicateTactic(t.tactic_id.clone()));
            }
        }
        let has_scheduling = tactics.iter().any(|t| t.kind == TacticKind::DynamicScheduling);
        if has_scheduling && scheduling_variations.is_empty() {
            return Err(TacticsError::InvalidTactic {
                tactic: "dynamic-scheduling".into(),
                reason: "scheduling_variations must not be empty".into(),
            });
        }
        Ok(TacticsCatalogue {
            tactics,
            scale_vm_type,
            scheduling_variations,
        })
    }

    /// The seven reference tactics.
    pub fn reference() -> Self {
        let t = |id: &str, kind, description: &str, affected_object, change, min_limit| AdaptationTactic {
            tactic_id: id.into(),
            kind,
            description: description.into(),
            affected_object,
            change,
            min_limit,
            max_limit: None,
            variations: default_variations(),
        };
        use AffectedObject::*;
        use Change::*;
        TacticsCatalogue::new(
            vec![
                t("vertical-scaling", TacticKind::VerticalScaling, "add VMs", Vm, Increase, 1),
                t("vertical-descaling", TacticKind::VerticalDescaling, "remove idle VMs", Vm, Decrease, 1),
                t("horizontal-scaling", TacticKind::HorizontalScaling, "power on hosts", Host, Increase, 1),
                t("horizontal-descaling", TacticKind::HorizontalDescaling, "power off hosts", Host, Decrease, 1),
                t(
                    "vm-consolidation",
                    TacticKind::Consolidation,
                    "empty the hosts running the fewest VMs and power them off",
                    Host,
                    Decrease,
                    1,
                ),
                t("concurrency", TacticKind::Concurrency, "move to multi-queue dispatch", Scheduler, Reconfigure, 0),
                t("dynamic-scheduling", TacticKind::DynamicScheduling, "switch scheduling policy", Scheduler, Reconfigure, 0),
            ],
            "m4.xlarge".into(),
            vec![
                SchedulingPolicy::EarliestDeadlineFirst,
                SchedulingPolicy::LeastSlackTime,
                SchedulingPolicy::SingleQueue,
                SchedulingPolicy::MultiQueue,
                SchedulingPolicy::MultiDynamicQueue,
            ],
        )
        .expect("reference catalogue is valid")
    }

    pub fn get(&self, tactic_id: &str) -> Option<&AdaptationTactic> {
        self.tactics.iter().find(|t| t.tactic_id == tactic_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRule {
    #[serde(rename = "id")]
    pub rule_id: u32,
    #[serde(default)]
    pub description: String,
    pub quality_attribute: QualityAttribute,
    #[serde(rename = "tactic")]
    pub tactic_id: String,
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<AdaptationRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<AdaptationRule>, catalogue: &TacticsCatalogue) -> Result<Self, TacticsError> {
        let mut ids = BTreeSet::new();
        for (i, r) in rules.iter().enumerate() {
            if !ids.insert(r.rule_id) {
                return Err(TacticsError::DuplicateRule(r.rule_id));
            }
            if r.priority == 0 {
                return Err(TacticsError::ZeroPriority(r.rule_id));
            }
            if catalogue.get(&r.tactic_id).is_none() {
                return Err(TacticsError::UnknownTactic {
                    rule: r.rule_id,
                    tactic: r.tactic_id.clone(),
                });
            }
            if let Some(other) = rules[..i]
                .iter()
                .find(|o| o.quality_attribute == r.quality_attribute && o.priority == r.priority)
            {
                return Err(TacticsError::DuplicatePriority {
                    attribute: r.quality_attribute,
                    priority: r.priority,
                    first: other.rule_id,
                    second: r.rule_id,
                });
            }
        }
        Ok(RuleSet { rules })
    }

    /// Response time: scheduling, concurrency, vertical then horizontal scaling.
    /// Energy and cost: consolidation, vertical then horizontal de-scaling.
    pub fn reference(catalogue: &TacticsCatalogue) -> Self {
        let mut rules = Vec::new();
        let mut push = |attribute: QualityAttribute, tactic: &str, priority: u32| {
            rules.push(AdaptationRule {
                rule_id: rules.len() as u32 + 1,
                description: format!("{tactic} for {attribute}"),
                quality_attribute: attribute,
                tactic_id: tactic.into(),
                priority,
            });
        };
        push(QualityAttribute::ResponseTime, "dynamic-scheduling", 1);
        push(QualityAttribute::ResponseTime, "concurrency", 2);
        push(QualityAttribute::ResponseTime, "vertical-scaling", 3);
        push(QualityAttribute::ResponseTime, "horizontal-scaling", 4);
        for attribute in [QualityAttribute::Cost, QualityAttribute::Energy] {
            push(attribute, "vm-consolidation", 1);
            push(attribute, "vertical-descaling", 2);
            push(attribute, "horizontal-descaling", 3);
        }
        RuleSet::new(rules, catalogue).expect("reference rules are valid")
    }

    pub fn rules(&self) -> &[AdaptationRule] {
        &self.rules
    }

    /// Rules for `attribute` in ascending priority.
    pub fn for_attribute(&self, attribute: QualityAttribute) -> Vec<&AdaptationRule> {
        let mut v: Vec<&AdaptationRule> = self.rules.iter().filter(|r| r.quality_attribute == attribute).collect();
        v.sort_by_key(|r| r.priority);
        v
    }
}
