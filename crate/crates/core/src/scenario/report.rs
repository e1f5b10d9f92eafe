use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::checks::{Command, Outcome};
use super::{Scenario, ScenarioError};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Multiplies every upper-bound threshold.
    pub threshold_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seed: None, out: None, threshold_scale: 1.0 }
    }
}

impl RunOptions {
    pub fn seed(&self, scenario: &Scenario) -> u64 {
        self.seed.unwrap_or(scenario.config.seed)
    }

    pub fn output_dir(&self, scenario: &Scenario) -> PathBuf {
        self.out
            .clone()
            .or_else(|| scenario.config.output.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Passes when `value < threshold`.
    Below,
    /// Passes when `value > threshold`.
    Above,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub passed: bool,
    pub value: f64,
    pub bound: Bound,
    pub threshold: f64,
    pub message: String,
}

impl CheckReport {
    pub fn new(check: impl Into<String>, value: f64, bound: Bound, threshold: f64, message: impl Into<String>) -> Self {
        let passed = match bound {
            Bound::Below => value < threshold,
            Bound::Above => value > threshold,
        };
        CheckReport { check: check.into(), passed, value, bound, threshold, message: message.into() }
    }
}

/// The deterministic part of a run; timestamps go to [`Meta`].
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub threshold_scale: f64,
    pub passed: bool,
    pub checks: Vec<CheckReport>,
    pub details: BTreeMap<String, Value>,
}

impl Report {
    pub(crate) fn new(scenario: &Scenario, command: Command, opts: &RunOptions, outcome: Outcome) -> Self {
        Report {
            scenario: scenario.name.clone(),
            version: scenario.config.version,
            command: command.name(),
            seed: opts.seed(scenario),
            threshold_scale: opts.threshold_scale,
            passed: outcome.checks.iter().all(|c| c.passed),
            checks: outcome.checks,
            details: outcome.details,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckReport> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub(crate) fn write(&self, dir: &Path) -> Result<(), ScenarioError> {
        write_file(&dir.join("report.json"), &self.to_json())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: &'static str,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub crate_version: &'static str,
}

impl Meta {
    pub(crate) fn write(&self, dir: &Path) -> Result<(), ScenarioError> {
        write_file(&dir.join("meta.json"), &serde_json::to_string_pretty(self).expect("meta serializes"))
    }
}

pub(crate) fn unix_time() -> f64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, contents).map_err(|cause| ScenarioError::Io { path: path.display().to_string(), cause })
}

/// A CSV table written in one go.
pub(crate) struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), ScenarioError> {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        write_file(path, &s)
    }
}

pub(crate) fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
