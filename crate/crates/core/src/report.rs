//! Baseline tables and metric deltas.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{CommonResult, EvalResult};

/// Published scores of comparison methods, one row per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTable {
    #[serde(default)]
    pub description: String,
    /// Column order used for rendering.
    pub metrics: Vec<String>,
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
}

impl BaselineTable {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text).map_err(|e| Error::parse(origin, text, &e))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        for (method, row) in &self.rows {
            for (metric, &v) in row {
                if !self.metrics.contains(metric) {
                    return Err(Error::UnknownMetric(format!("{method}.{metric}")));
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Invalid(format!(
                        "{method}.{metric} = {v} lies outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, method: &str) -> Result<&BTreeMap<String, f64>> {
        self.rows
            .get(method)
            .ok_or_else(|| Error::Invalid(format!("no baseline row named {method:?}")))
    }
}

/// Metric row for an open-world evaluation; undefined metrics are omitted.
pub fn eval_row(r: &EvalResult) -> BTreeMap<String, f64> {
    [
        ("ar_agnostic_corner", r.ar_agnostic_corner),
        ("ar_agnostic", r.ar_agnostic),
        ("ap_agnostic", r.ap_agnostic),
        ("ap_common", r.ap_common),
    ]
    .into_iter()
    .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
    .collect()
}

pub fn common_row(r: &CommonResult) -> BTreeMap<String, f64> {
    [("recall", r.recall), ("map50", r.map50)]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metrics: Vec<String>,
    pub result: BTreeMap<String, f64>,
    /// `result - baseline` per method and metric, for metrics both sides have.
    pub deltas: BTreeMap<String, BTreeMap<String, f64>>,
}

pub fn report(result: &BTreeMap<String, f64>, baselines: &BaselineTable) -> Result<Report> {
    for key in result.keys() {
        if !baselines.metrics.contains(key) {
            return Err(Error::UnknownMetric(key.clone()));
        }
    }
    let deltas = baselines
        .rows
        .iter()
        .map(|(method, row)| {
            let d = result
                .iter()
                .filter_map(|(k, v)| row.get(k).map(|b| (k.clone(), v - b)))
                .collect();
            (method.clone(), d)
        })
        .collect();
    Ok(Report {
        metrics: baselines.metrics.clone(),
        result: result.clone(),
        deltas,
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }

    /// Tab-separated table: the result row, then one delta row per method.
    pub fn to_text(&self) -> String {
        let cell = |v: Option<&f64>, signed: bool| match v {
            Some(v) if signed => format!("{v:+.3}"),
            Some(v) => format!("{v:.3}"),
            None => "-".into(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "row\t{}", self.metrics.join("\t"));
        let cells: Vec<String> = self
            .metrics
            .iter()
            .map(|m| cell(self.result.get(m), false))
            .collect();
        let _ = writeln!(out, "result\t{}", cells.join("\t"));
        for (method, d) in &self.deltas {
            let cells: Vec<String> = self.metrics.iter().map(|m| cell(d.get(m), true)).collect();
            let _ = writeln!(out, "vs {method}\t{}", cells.join("\t"));
        }
        out
    }
}
