//! Mode x service matrix execution.

use crate::config::ExperimentConfig;
use crate::metrics::{mode_averages, ExperimentSummary, ModeAverage, OverheadLedger};
use crate::mode::Mode;
use crate::sim::{RunResult, SimError, Simulation};

/// Runs one pair on a fresh simulator.
pub fn run_pair(cfg: &ExperimentConfig, mode: Mode, service: u32) -> Result<RunResult, SimError> {
    Simulation::new(cfg, mode, service)?.run()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Successful runs, in matrix order.
    pub runs: Vec<RunResult>,
    /// One entry per pair, failed ones included.
    pub summaries: Vec<ExperimentSummary>,
}

impl ExperimentOutcome {
    pub fn failed(&self) -> impl Iterator<Item = &ExperimentSummary> {
        self.summaries.iter().filter(|s| s.is_failed())
    }

    pub fn averages(&self) -> Vec<ModeAverage> {
        mode_averages(&self.summaries)
    }

    pub fn run(&self, mode: Mode, service: u32) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.mode == mode && r.service == service)
    }

    /// Overhead summed over a mode's runs.
    pub fn mode_ledger(&self, mode: Mode) -> OverheadLedger {
        let mut total = OverheadLedger::default();
        for r in self.runs.iter().filter(|r| r.mode == mode) {
            total.merge(&r.ledger);
        }
        total
    }
}

/// Runs every (mode, service) pair in order. A failing pair is recorded and
/// the rest still run.
pub fn run_experiment(cfg: &ExperimentConfig, modes: &[Mode], services: &[u32]) -> ExperimentOutcome {
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for &mode in modes {
        for &service in services {
            match run_pair(cfg, mode, service) {
                Ok(r) => {
                    summaries.push(r.summary.clone());
                    runs.push(r);
                }
                Err(e) => {
                    log::error!("{mode} service {service} failed: {e}");
                    summaries.push(ExperimentSummary::failed(mode, service, e.to_string()));
                }
            }
        }
    }
    ExperimentOutcome { runs, summaries }
}
