use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which controller governs the resource pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NonAdaptive,
    SelfAdaptive,
    StimulusAware,
    GoalAware,
    TimeAware,
    MetaAware,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::NonAdaptive,
        Mode::SelfAdaptive,
        Mode::StimulusAware,
        Mode::GoalAware,
        Mode::TimeAware,
        Mode::MetaAware,
    ];

    /// The four architectures compared in the evaluation matrix.
    pub const COMPARISON: [Mode; 4] = [Mode::NonAdaptive, Mode::SelfAdaptive, Mode::StimulusAware, Mode::GoalAware];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NonAdaptive => "non-adaptive",
            Mode::SelfAdaptive => "self-adaptive",
            Mode::StimulusAware => "stimulus-aware",
            Mode::GoalAware => "goal-aware",
            Mode::TimeAware => "time-aware",
            Mode::MetaAware => "meta-aware",
        }
    }

    pub fn is_adaptive(self) -> bool {
        self != Mode::NonAdaptive
    }

    pub fn is_self_aware(self) -> bool {
        !matches!(self, Mode::NonAdaptive | Mode::SelfAdaptive)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected one of: {})", Mode::ALL.map(|m| m.as_str()).join(", ")))
    }
}
