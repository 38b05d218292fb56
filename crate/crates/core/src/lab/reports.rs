//! Experiment results and their CSV/JSON emission.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

use super::config::{ExperimentConfig, SCHEMA_VERSION};

/// Per-case status of a table row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    /// Zero denominator; the ratio is not reported.
    Skipped,
    /// The certification or check of this case failed.
    Failed,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Skipped => "skipped",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub case: usize,
    pub cells: usize,
    pub status: RowStatus,
    /// Values aligned with [`ExperimentResult::columns`]; `None` for missing entries.
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One declared property with its measured value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub holds: bool,
    pub note: Option<String>,
}

impl PropertyCheck {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self::build(name, value, Comparison::AtMost, threshold, value <= threshold)
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self::build(name, value, Comparison::AtLeast, threshold, value >= threshold)
    }

    /// Boolean property encoded as `value ≥ 1`.
    pub fn flag(name: &str, holds: bool) -> Self {
        Self::build(name, if holds { 1.0 } else { 0.0 }, Comparison::AtLeast, 1.0, holds)
    }

    fn build(name: &str, value: f64, comparison: Comparison, threshold: f64, holds: bool) -> Self {
        Self {
            name: name.into(),
            value: finite(value),
            comparison,
            threshold,
            holds: holds && !value.is_nan(),
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Non-finite values are clamped so JSON stays numeric.
fn finite(v: f64) -> f64 {
    if v.is_nan() {
        f64::MAX
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

/// Deterministic description of the build that produced a result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub summary: BTreeMap<String, Value>,
    pub properties: Vec<PropertyCheck>,
    pub notes: Vec<String>,
    pub passed: bool,
    pub environment: Environment,
}

impl ExperimentResult {
    pub fn new(config: &ExperimentConfig, columns: &[&str]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
            properties: Vec::new(),
            notes: Vec::new(),
            passed: true,
            environment: Environment::current(),
        }
    }

    pub fn push_row(&mut self, case: usize, cells: usize, status: RowStatus, values: Vec<Option<f64>>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(Row {
            case,
            cells,
            status,
            values,
        });
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }

    /// Record a finite number, or `null`.
    pub fn set_f64(&mut self, key: &str, value: f64) {
        let v = serde_json::Number::from_f64(value).map_or(Value::Null, Value::Number);
        self.summary.insert(key.into(), v);
    }

    pub fn check(&mut self, p: PropertyCheck) {
        self.passed &= p.holds;
        self.properties.push(p);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Values of `column` over rows with status `ok`.
    pub fn column(&self, column: &str) -> Vec<f64> {
        let Some(j) = self.columns.iter().position(|c| c == column) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|r| r.status == RowStatus::Ok)
            .filter_map(|r| r.values[j])
            .collect()
    }

    pub fn property(&self, name: &str) -> Option<&PropertyCheck> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["case".to_string(), "cells".into(), "status".into()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.case.to_string(), r.cells.to_string(), r.status.as_str().to_string()];
            rec.extend(r.values.iter().map(|v| v.map_or(String::new(), |x| format!("{x:e}"))));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Write `<name>.csv` and `<name>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let name = self.config.experiment.as_str();
        let csv_path = dir.join(format!("{name}.csv"));
        let json_path = dir.join(format!("{name}.json"));
        std::fs::write(&csv_path, self.to_csv()?)?;
        std::fs::write(&json_path, self.to_json()?)?;
        Ok((csv_path, json_path))
    }
}

/// `max / min` over positive values, or `None` if there are none.
pub fn spread(values: &[f64]) -> Option<f64> {
    let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if pos.is_empty() {
        return None;
    }
    let max = pos.iter().copied().fold(f64::MIN, f64::max);
    let min = pos.iter().copied().fold(f64::MAX, f64::min);
    Some(max / min)
}

pub fn max_of(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::max)
}

pub fn min_of(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::min)
}

/// `max(a/b, b/a)` for positive `a`, `b`.
pub fn factor(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        (a / b).max(b / a)
    } else if a == b {
        1.0
    } else {
        f64::INFINITY
    }
}
