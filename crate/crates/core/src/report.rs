//! CSV emission and the text summary table.
//!
//! Files are written to a temporary sibling and renamed into place, so a
//! re-emit never leaves a half-written file behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::ExperimentOutcome;
use crate::metrics::{overhead_total, ExperimentSummary, IntervalMetrics, ModeAverage, Phase};
use crate::mode::Mode;
use crate::sim::{DecisionLogEntry, RunResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: unknown mode {mode:?}")]
    Mode { path: PathBuf, mode: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub interval: usize,
    pub service: u32,
    pub avg_response: Option<f64>,
    pub energy_kwh: f64,
    pub cost_usd: f64,
    pub completed: u64,
    pub violations: u32,
    pub decisions: u32,
}

/// One row per interval; `service` is the run's service type. Energy, cost,
/// violations and decisions are interval-wide values.
pub fn interval_rows(service: u32, intervals: &[IntervalMetrics]) -> Vec<IntervalRow> {
    intervals
        .iter()
        .map(|i| IntervalRow {
            interval: i.interval_index,
            service,
            avg_response: i.per_service.get(&service).and_then(|s| s.avg_response).or(i.avg_response),
            energy_kwh: i.energy_kwh,
            cost_usd: i.cost_usd,
            completed: i.completed,
            violations: i.violations,
            decisions: i.decisions,
        })
        .collect()
}

/// A row of summary.csv. `service` is a service id or `avg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: String,
    pub service: String,
    /// Request-weighted mean response time.
    pub avg_response: Option<f64>,
    /// Unweighted mean of the per-service means; set on `avg` rows only.
    pub avg_response_unweighted: Option<f64>,
    pub energy_kwh: f64,
    pub cost_usd: f64,
    pub violation_pct: Option<f64>,
    pub completed: u64,
    pub incomplete: u64,
    pub decisions: u64,
    pub error: Option<String>,
}

impl SummaryRow {
    fn from_summary(s: &ExperimentSummary) -> Self {
        SummaryRow {
            mode: s.mode.as_str().into(),
            service: s.service.to_string(),
            avg_response: s.avg_response,
            avg_response_unweighted: None,
            energy_kwh: s.energy_kwh,
            cost_usd: s.cost_usd,
            violation_pct: s.violation_pct,
            completed: s.completed,
            incomplete: s.incomplete,
            decisions: s.decisions,
            error: s.error.clone(),
        }
    }

    fn from_average(a: &ModeAverage, summaries: &[ExperimentSummary]) -> Self {
        let runs = summaries.iter().filter(|s| s.mode == a.mode && !s.is_failed());
        let (incomplete, decisions) = runs.fold((0, 0), |acc, s| (acc.0 + s.incomplete, acc.1 + s.decisions));
        SummaryRow {
            mode: a.mode.as_str().into(),
            service: "avg".into(),
            avg_response: a.avg_response,
            avg_response_unweighted: a.service_mean_response,
            energy_kwh: a.energy_kwh,
            cost_usd: a.cost_usd,
            violation_pct: a.violation_pct,
            completed: a.completed,
            incomplete,
            decisions,
            error: None,
        }
    }
}

/// Per-pair rows followed by one `avg` row per mode.
pub fn summary_rows(summaries: &[ExperimentSummary], averages: &[ModeAverage]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = summaries.iter().map(SummaryRow::from_summary).collect();
    rows.extend(averages.iter().map(|a| SummaryRow::from_average(a, summaries)));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub mode: String,
    pub phase: String,
    pub seconds: f64,
    pub invocations: u64,
}

/// Four phase rows and a `total` row per mode, summed over the mode's runs.
pub fn overhead_rows(outcome: &ExperimentOutcome, modes: &[Mode]) -> Vec<OverheadRow> {
    let mut rows = Vec::new();
    for &mode in modes {
        let ledger = outcome.mode_ledger(mode);
        for phase in Phase::ALL {
            rows.push(OverheadRow {
                mode: mode.as_str().into(),
                phase: phase.as_str().into(),
                seconds: ledger.seconds(phase),
                invocations: ledger.invocations(phase),
            });
        }
        rows.push(OverheadRow {
            mode: mode.as_str().into(),
            phase: "total".into(),
            seconds: overhead_total(&ledger),
            invocations: ledger.total_invocations(),
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub time: f64,
    pub tactic: String,
    pub magnitude: u32,
    pub trigger: String,
    pub proactive: bool,
    pub applied: bool,
    pub hosts_after: usize,
    pub vms_after: usize,
    pub path: String,
}

fn decision_rows(entries: &[DecisionLogEntry]) -> Vec<DecisionRow> {
    entries
        .iter()
        .map(|d| DecisionRow {
            time: d.time,
            tactic: d.tactic_id.clone(),
            magnitude: d.magnitude,
            trigger: d.trigger.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(";"),
            proactive: d.proactive,
            applied: d.applied,
            hosts_after: d.hosts_after,
            vms_after: d.vms_after,
            path: d.path.map_or("", |p| p.as_str()).into(),
        })
        .collect()
}

/// Writes `rows` (header always present) via a temporary file and rename.
pub fn write_csv<T: Serialize>(path: &Path, headers: &[&str], rows: &[T]) -> Result<(), ReportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&tmp)
            .map_err(csv_err(&tmp))?;
        w.write_record(headers).map_err(csv_err(&tmp))?;
        for r in rows {
            w.serialize(r).map_err(csv_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ReportError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

pub const INTERVAL_HEADERS: [&str; 8] = [
    "interval",
    "service",
    "avg_response",
    "energy_kwh",
    "cost_usd",
    "completed",
    "violations",
    "decisions",
];
pub const SUMMARY_HEADERS: [&str; 11] = [
    "mode",
    "service",
    "avg_response",
    "avg_response_unweighted",
    "energy_kwh",
    "cost_usd",
    "violation_pct",
    "completed",
    "incomplete",
    "decisions",
    "error",
];
pub const OVERHEAD_HEADERS: [&str; 4] = ["mode", "phase", "seconds", "invocations"];
pub const DECISION_HEADERS: [&str; 9] = [
    "time",
    "tactic",
    "magnitude",
    "trigger",
    "proactive",
    "applied",
    "hosts_after",
    "vms_after",
    "path",
];

/// Directory holding one pair's files.
pub fn pair_dir(out_dir: &Path, mode: Mode, service: u32) -> PathBuf {
    out_dir.join(mode.as_str()).join(format!("service-{service}"))
}

pub fn emit_run(out_dir: &Path, run: &RunResult) -> Result<(), ReportError> {
    let dir = pair_dir(out_dir, run.mode, run.service);
    write_csv(
        &dir.join("intervals.csv"),
        &INTERVAL_HEADERS,
        &interval_rows(run.service, &run.intervals),
    )?;
    write_csv(&dir.join("decisions.csv"), &DECISION_HEADERS, &decision_rows(&run.decisions))
}

/// Writes per-pair files plus `summary.csv` and `overhead.csv` under `out_dir`.
/// Overhead is wall-clock time and lives apart from the deterministic files.
pub fn emit_report(out_dir: &Path, outcome: &ExperimentOutcome, modes: &[Mode]) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    for run in &outcome.runs {
        emit_run(out_dir, run)?;
        let dir = pair_dir(out_dir, run.mode, run.service);
        written.push(dir.join("intervals.csv"));
        written.push(dir.join("decisions.csv"));
    }
    let summary = out_dir.join("summary.csv");
    write_csv(
        &summary,
        &SUMMARY_HEADERS,
        &summary_rows(&outcome.summaries, &outcome.averages()),
    )?;
    let overhead = out_dir.join("overhead.csv");
    let present: Vec<Mode> = modes
        .iter()
        .copied()
        .filter(|m| outcome.summaries.iter().any(|s| s.mode == *m))
        .collect();
    write_csv(&overhead, &OVERHEAD_HEADERS, &overhead_rows(outcome, &present))?;
    written.push(summary);
    written.push(overhead);
    Ok(written)
}

fn cell(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

/// Aligned text table of summary rows, with overhead totals when given.
pub fn render_table(rows: &[SummaryRow], overhead: &[OverheadRow]) -> String {
    let header = [
        "mode", "service", "avg_rt", "energy_kwh", "cost_usd", "viol_%", "done", "left", "decisions", "overhead_s",
    ];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let oh = if r.service == "avg" {
            overhead
                .iter()
                .find(|o| o.mode == r.mode && o.phase == "total")
                .map_or("-".into(), |o| format!("{:.6}", o.seconds))
        } else {
            String::new()
        };
        let status = r.error.as_ref().map(|e| format!("FAILED: {e}"));
        table.push(vec![
            r.mode.clone(),
            r.service.clone(),
            status.unwrap_or_else(|| cell(r.avg_response, 2)),
            format!("{:.2}", r.energy_kwh),
            format!("{:.2}", r.cost_usd),
            cell(r.violation_pct, 2),
            r.completed.to_string(),
            r.incomplete.to_string(),
            r.decisions.to_string(),
            oh,
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| if c < 2 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Parses the mode column of summary rows read back from disk.
pub fn row_mode(path: &Path, row: &SummaryRow) -> Result<Mode, ReportError> {
    row.mode.parse().map_err(|_| ReportError::Mode {
        path: path.to_path_buf(),
        mode: row.mode.clone(),
    })
}
