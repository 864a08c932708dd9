//! Report bundle: config echo, tagged outputs and PASS/FAIL checks.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// How a number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    Quadrature,
    Eigensolve,
    ProbeEstimate,
}

/// Machine-readable cause of a FAIL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    ToleranceExceeded,
    OrderTooLow,
    NotDecreasing,
    NotDominated,
    Unstable,
    CountUnstable,
    Divergent,
    InconclusiveTail,
    Contaminated,
    EigensolverFailed,
    Rejected,
    Unsupported,
    ComputeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub task: String,
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<ReasonCode>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    /// PASS iff `value <= threshold`.
    pub fn at_most(task: &str, name: &str, provenance: Provenance, value: f64, threshold: f64) -> Check {
        let pass = value <= threshold;
        Check {
            task: task.into(),
            name: name.into(),
            pass,
            reason: (!pass).then_some(ReasonCode::ToleranceExceeded),
            provenance,
            value: Some(value),
            threshold: Some(threshold),
            detail: format!("{value:.3e} <= {threshold:.1e}"),
        }
    }

    pub fn verdict(task: &str, name: &str, provenance: Provenance, pass: bool, reason: ReasonCode, detail: String) -> Check {
        Check {
            task: task.into(),
            name: name.into(),
            pass,
            reason: (!pass).then_some(reason),
            provenance,
            value: None,
            threshold: None,
            detail,
        }
    }

    pub fn failed(task: &str, name: &str, provenance: Provenance, reason: ReasonCode, detail: String) -> Check {
        Check::verdict(task, name, provenance, false, reason, detail)
    }

    pub fn with_value(mut self, value: f64) -> Check {
        self.value = Some(value);
        self
    }
}

/// A numeric output with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tagged<T> {
    pub provenance: Provenance,
    pub data: T,
}

pub fn tagged<T>(provenance: Provenance, data: T) -> Tagged<T> {
    Tagged { provenance, data }
}

/// A CSV or triplet file produced by a task, written next to the JSON report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    #[serde(skip)]
    pub contents: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub run_id: String,
    pub task: String,
    pub config: RunConfig,
    pub outputs: serde_json::Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    pub pass: bool,
}

/// First 16 hex digits of SHA-256 over the task name and the canonical config.
pub fn run_id(task: &str, config: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(task.as_bytes());
    h.update([0]);
    h.update(config.to_toml().as_bytes());
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl ReportBundle {
    pub fn new(task: &str, config: &RunConfig, outputs: serde_json::Value, checks: Vec<Check>, artifacts: Vec<Artifact>) -> ReportBundle {
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        ReportBundle { run_id: run_id(task, config), task: task.into(), config: config.clone(), outputs, checks, artifacts, pass }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Write `<task>.json` and the artifacts into `dir`.
    pub fn write(&self, dir: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let json = dir.join(format!("{}.json", self.task));
        std::fs::write(&json, self.to_json() + "\n")?;
        out.push(json);
        for a in &self.artifacts {
            let p = dir.join(&a.name);
            std::fs::write(&p, &a.contents)?;
            out.push(p);
        }
        Ok(out)
    }
}
